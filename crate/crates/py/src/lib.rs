use pyo3::prelude::*;

#[pymodule]
fn rmdp_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
