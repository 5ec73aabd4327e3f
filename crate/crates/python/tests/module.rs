use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(&Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let module = PyModule::new(py, "stanceprobe_py").unwrap();
        stanceprobe_py::stanceprobe_py(&module).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("sp", module).unwrap();
        f(&globals);
    });
}

fn run(globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    globals.py().run(&code, Some(globals), None).unwrap();
}

#[test]
fn statistics_are_callable_from_python() {
    with_module(|g| {
        run(
            g,
            "t, df, p = sp.welch_test([1, 2, 3], [4, 5, 6])\n\
             assert abs(t + 3.6742346141747673) < 1e-12 and df == 4.0\n\
             assert sp.bonferroni([0.01, 0.02], 3) == [True, False]\n",
        );
    });
}

#[test]
fn errors_become_value_errors() {
    with_module(|g| {
        run(
            g,
            "try:\n    sp.welch_test([1.0], [2.0, 3.0])\nexcept ValueError as e:\n    msg = str(e)\nelse:\n    raise AssertionError\n\
             assert 'two values' in msg\n",
        );
    });
}

#[test]
fn lexicon_round_trips_through_json() {
    let fx = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/lexicons/");
    with_module(|g| {
        g.set_item("fx", fx).unwrap();
        run(
            g,
            "lex = sp.fuse_lexicons([(fx + 'en_binary.tsv', 'en', 'binary'), (fx + 'en_continuous.tsv', 'en', 'continuous')])\n\
             again = sp.Lexicon.from_json(lex.to_json())\n\
             assert again.get('cruel') == lex.get('cruel') and 'cruel' in again\n\
             assert lex.argmax('honest') == 'pos'\n",
        );
    });
}
