#![no_main]

use libfuzzer_sys::fuzz_target;
use rqclab::PauliString;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(p) = text.parse::<PauliString>() else {
        return;
    };
    assert_eq!(p.to_string(), text);
    assert_eq!(p.len(), text.len());
    assert!(p.weight() <= p.len());
    assert_eq!(p.weight(), p.support().len());
    if p.len() <= 32 {
        assert_eq!(PauliString::from_index(p.len(), p.index()), p);
    }
});
