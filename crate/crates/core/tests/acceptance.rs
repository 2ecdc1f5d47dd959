use capax_core::suite::{run, Profile, CRITERIA};

fn profile() -> Profile {
    match std::env::var("CAPAX_SUITE_PROFILE") {
        Ok(s) => Profile::parse(&s).expect("CAPAX_SUITE_PROFILE is quick or full"),
        Err(_) => Profile::Quick,
    }
}

#[test]
fn acceptance() {
    let profile = profile();
    let mut failed = vec![];
    for id in 1..=CRITERIA.len() {
        let o = run(id, profile).unwrap();
        println!(
            "[{}] {:>2} {:<30} {:>7.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.seconds,
            o.detail
        );
        if !o.passed {
            failed.push(o.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
