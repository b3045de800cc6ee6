#![no_main]

// Argument parsing only; running an arbitrary experiment could take minutes.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    let args = std::iter::once("rqclab").chain(line.split_ascii_whitespace());
    if let Ok(config) = rqclab_cli::parse_args(args) {
        let header = config.config_line();
        assert!(header.starts_with("# config: command="));
        assert!(header.ends_with('\n'));
    }
});
