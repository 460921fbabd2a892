#![no_main]

use libfuzzer_sys::fuzz_target;
use slip_core::percept::pgm::PgmImage;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = PgmImage::decode(data) {
        assert_eq!(img.data.len(), img.width * img.height);
        assert_eq!(PgmImage::decode(&img.encode()).unwrap(), img);
    }
});
