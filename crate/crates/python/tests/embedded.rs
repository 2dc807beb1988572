//! Runs the Python smoke script against the module inside an embedded interpreter.

use pyo3::prelude::*;
use pyo3::types::PyModule;

#[test]
fn smoke_script_passes() {
    Python::initialize();
    Python::attach(|py| -> PyResult<()> {
        let m = PyModule::new(py, "eegxai")?;
        eegxai_py::eegxai_module(&m)?;
        py.import("sys")?.getattr("modules")?.set_item("eegxai", m)?;
        let code = std::ffi::CString::new(include_str!("../python/smoke_test.py")).unwrap();
        let script = PyModule::from_code(py, &code, c"smoke_test.py", c"smoke_test")?;
        if let Err(e) = script.getattr("main")?.call0() {
            e.display(py);
            return Err(e);
        }
        Ok(())
    })
    .unwrap_or_else(|e| panic!("smoke script failed: {e}"));
}
