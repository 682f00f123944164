//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use minihello::frontend::load_package_dir;
use minihello::{SourceUnit, Value};
use minihello::net::codec::MemorySpace;
use minihello::value::ArrayData;

/// Sources of one of the bundled sample packages.
pub fn sample_sources(name: &str) -> Vec<SourceUnit> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples").join(name);
    load_package_dir(&dir).expect("sample package")
}

/// A ring of `n` objects, each also pointing at an int array, rooted at the first.
pub fn ring(space: &mut MemorySpace, n: usize) -> Value {
    let mut refs = Vec::with_capacity(n);
    for i in 0..n {
        let payload = Value::array(ArrayData::Int(vec![i as i64; 8]));
        refs.push(space.new_object(0, vec![Value::Int(i as i64), Value::Null, payload]));
    }
    for i in 0..n {
        let next = Value::Ref(refs[(i + 1) % n].clone());
        space.cell(&refs[i]).unwrap().borrow_mut().fields[1] = next;
    }
    Value::Ref(refs[0].clone())
}
