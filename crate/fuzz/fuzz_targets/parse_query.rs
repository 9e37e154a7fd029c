#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::filterlang::{parse_query, print_query};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ast) = parse_query(text) {
        assert!(ast.validate().is_ok());
        let again = parse_query(&print_query(&ast)).expect("printed query reparses");
        assert_eq!(parse_query(&print_query(&again)).unwrap(), again);
    }
});
