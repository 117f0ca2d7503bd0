#![no_main]
use libfuzzer_sys::fuzz_target;

use clue_tensor::{manifest, ParamStore, Tensor};

// Input: manifest text, a NUL byte, then the contents of `w.bin`.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join(manifest::MANIFEST_FILE), &data[..split]).unwrap();
    std::fs::write(dir.path().join("w.bin"), &data[split + 1..]).unwrap();

    let mut store = ParamStore::<f32>::new();
    store.add("w", Tensor::zeros(&[2, 3])).unwrap();
    store.add("b", Tensor::zeros(&[3])).unwrap();
    let before: Vec<_> = store.iter().map(|(_, p)| p.value.clone()).collect();
    if manifest::load(&mut store, dir.path()).is_err() {
        let after: Vec<_> = store.iter().map(|(_, p)| p.value.clone()).collect();
        assert_eq!(before, after, "failed load modified the store");
    }
});
