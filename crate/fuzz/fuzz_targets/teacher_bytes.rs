#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::teacher::TeacherNet;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = TeacherNet::from_bytes(data) {
        let again = TeacherNet::from_bytes(&net.to_bytes()).expect("round trip");
        assert_eq!(net, again);
    }
});
