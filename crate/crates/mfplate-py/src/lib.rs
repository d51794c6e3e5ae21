use pyo3::prelude::*;

#[pymodule]
fn mfplate_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    let _ = m;
    Ok(())
}
