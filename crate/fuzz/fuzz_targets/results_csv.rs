#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::harness::{read_results_csv, write_results_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_results_csv(data) else { return };
    let mut first = Vec::new();
    write_results_csv(&mut first, &rows).unwrap();
    let back = read_results_csv(first.as_slice()).unwrap();
    let mut second = Vec::new();
    write_results_csv(&mut second, &back).unwrap();
    assert_eq!(first, second);
});
