#[path = "support/scheduler_fuzz.rs"]
mod fuzz;

use proptest::prelude::*;

#[test]
fn ten_thousand_events_keep_quota_devices_and_capacity() {
    let stats = fuzz::run(2024, 10_000).unwrap();
    assert_eq!(stats.events, 10_000);
    assert!(stats.admitted > 1000, "too little admission traffic: {stats:?}");
    assert!(stats.max_concurrent > 4, "never saturated: {stats:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_seeds_hold_the_same_properties(seed in any::<u64>()) {
        let r = fuzz::run(seed, 600);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Identical equal-priority workloads are admitted in enqueue order,
    /// whatever order the holders complete in.
    #[test]
    fn identical_requests_are_admitted_fifo(
        n in 2usize..40,
        picks in prop::collection::vec(any::<prop::sample::Index>(), 40),
    ) {
        use hqflow_core::assets::{sample_cluster, sample_queues};
        use hqflow_core::scheduler::{Scheduler, WorkloadRequest};
        use hqflow_core::workflow::ResourceRequest;

        let mut cluster = sample_cluster();
        let mut s = Scheduler::new(sample_queues()).unwrap();
        for i in 0..n {
            let mut request = ResourceRequest::default();
            // 3 cores each: the 8-core cpu quota admits two at a time.
            request.requests.set("cpu", 3000);
            request.requests.set("memory", 1 << 30);
            s.enqueue(
                WorkloadRequest {
                    task_id: format!("w{i:02}"),
                    namespace: Some("quantum-workflows".into()),
                    queue: "queue-cpu".into(),
                    request,
                    node_selector: Default::default(),
                    priority: 0,
                },
                &cluster,
            )
            .unwrap();
        }
        let mut admitted: Vec<String> = s.admit_cycle(&mut cluster).into_iter().map(|a| a.task_id).collect();
        let mut held = admitted.clone();
        let mut k = 0;
        while !held.is_empty() {
            let id = held.remove(picks[k % picks.len()].index(held.len()));
            k += 1;
            for a in s.complete(&id, &mut cluster).unwrap() {
                held.push(a.task_id.clone());
                admitted.push(a.task_id);
            }
        }
        let expected: Vec<String> = (0..n).map(|i| format!("w{i:02}")).collect();
        prop_assert_eq!(admitted, expected);
    }
}
