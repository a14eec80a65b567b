use taskprio::io::{read_demos, read_table, write_demos, write_table};
use taskprio::priority::PriorityModel;
use taskprio::sim::experiments::{
    bimanual_tasks, priority_demos, priority_suite, train_priority, train_spaces, PriorityConfig, SpacesSuiteConfig,
};
use taskprio::sim::{preset, priority_program, rederive_xi, Side};
use taskprio::Execution;

fn short_cfg() -> PriorityConfig {
    PriorityConfig {
        horizon: 20.0,
        ..PriorityConfig::default()
    }
}

#[test]
fn recorded_xi_is_reproduced_from_joint_states() {
    let cfg = short_cfg();
    for side in [Side::Left, Side::Right] {
        let (chain, demos, _) = priority_demos(&cfg, side).unwrap();
        let p = preset(&cfg.robot).unwrap();
        let program = priority_program(&chain, &p.q_init(), side, cfg.excursion, cfg.horizon).unwrap();
        for d in &demos {
            let xi = rederive_xi(&chain, &bimanual_tasks(), &program, cfg.gain, d).unwrap();
            assert!((xi - &d.xi).amax() < 1e-12);
        }
    }
}

#[test]
fn undamped_projection_reproduces_the_top_task() {
    // Short excursion keeps the arms away from singular poses, so the
    // undamped demo is well defined.
    let cfg = PriorityConfig {
        damping: 0.0,
        excursion: 0.2,
        ..short_cfg()
    };
    for side in [Side::Left, Side::Right] {
        let report = priority_suite(&cfg, side).unwrap();
        let c = report
            .criteria
            .iter()
            .find(|c| c.name == "top-task projection deviation")
            .expect("reported at zero damping");
        assert!(c.passed, "{side:?}: deviation {}", c.value);
    }
}

#[test]
fn priority_demos_round_trip_through_csv() {
    let (_, demos, _) = priority_demos(&short_cfg(), Side::Left).unwrap();
    let mut buf = Vec::new();
    write_demos(&mut buf, &demos).unwrap();
    let header = std::str::from_utf8(&buf).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("demo,t,q_0,"));
    assert!(header.contains(",xi_0,") && header.contains(",J1_1_4"));
    assert_eq!(read_demos(buf.as_slice()).unwrap(), demos);
}

#[test]
fn spaces_demos_round_trip_through_csv() {
    let cfg = SpacesSuiteConfig {
        n_demos: 2,
        k: 2,
        ..SpacesSuiteConfig::default()
    };
    let (_, _, demos) = train_spaces(&cfg).unwrap();
    let mut buf = Vec::new();
    write_demos(&mut buf, &demos.demos).unwrap();
    assert_eq!(read_demos(buf.as_slice()).unwrap(), demos.demos);
}

#[test]
fn malformed_demo_files_are_rejected() {
    for text in [
        "demo,t,xi_0\n0,0.0,abc\n",
        "demo,t,xi_0\n1,0.0,1.0\n",
        "demo,t,xi_0\n0,0.0,1.0\n1,0.0,1.0\n0,0.1,1.0\n",
        "demo,t,xi_0,obj_0\n0,0.0,1.0,2.0\n",
    ] {
        assert!(read_demos(text.as_bytes()).is_err(), "{text:?}");
    }
}

#[test]
fn tables_round_trip_bitwise() {
    let cols = vec!["a".to_string(), "b".to_string()];
    let rows = vec![vec![0.1, -2.0 / 3.0], vec![1e-300, 12345.678901234567]];
    let mut buf = Vec::new();
    write_table(&mut buf, &cols, &rows).unwrap();
    let (c, r) = read_table(buf.as_slice()).unwrap();
    assert_eq!((c, r), (cols.clone(), rows));
    assert!(write_table(Vec::new(), &cols, &[vec![1.0]]).is_err());
}

#[test]
fn training_is_deterministic_and_execution_independent() {
    let seq = PriorityConfig {
        exec: Execution::Sequential,
        ..short_cfg()
    };
    let a = train_priority(&seq, Side::Left).unwrap().0.to_json().unwrap();
    let b = train_priority(&seq, Side::Left).unwrap().0.to_json().unwrap();
    let c = train_priority(&short_cfg(), Side::Left).unwrap().0.to_json().unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    let back = PriorityModel::from_json(&a).unwrap();
    assert_eq!(back.to_json().unwrap(), a);
}
