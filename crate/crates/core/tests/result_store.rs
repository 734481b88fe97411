use audexp_core::store::{finalize, load_result, SessionResult};
use audexp_core::testing::{session_log, synthetic_plan};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn finalize_then_load_is_identity(log in session_log(4)) {
        let plan = synthetic_plan(4);
        let root = tempfile::tempdir().unwrap();
        let dir = root.path().join("out");
        let (written, files) = finalize(&log, &plan, &dir).unwrap();
        prop_assert_eq!(&written, &SessionResult::from_log(&log, &plan));
        prop_assert_eq!(load_result(&dir).unwrap(), written.clone());

        let events = std::fs::read_to_string(&files.events).unwrap();
        prop_assert_eq!(events.lines().count(), log.events.len());
        prop_assert_eq!(
            written.summary.event_counts.values().sum::<usize>(),
            log.events.len()
        );
        for (trace, path) in written.traces.iter().zip(&files.traces) {
            let rows = std::fs::read_to_string(path).unwrap().lines().count() - 1;
            prop_assert_eq!(rows, trace.samples.len());
        }
    }
}
