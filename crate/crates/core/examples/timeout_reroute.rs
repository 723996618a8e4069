//! A job that overruns the standard pool's limit is cancelled and rerun
//! once on the long-run pool.

use std::time::Duration;

use codefacts::orchestrator::{run_task, Attempt, Clock, ManualClock, PoolConfig, RunStatus};

fn main() {
    let mut pools = PoolConfig::default();
    pools.standard.time_limit = 10.0;
    pools.longrun.time_limit = 60.0;
    let clock = ManualClock::default();

    // Thirty seconds of work in one-second steps.
    let outcome = run_task(&pools, &clock, false, |pool, deadline| {
        for _ in 0..30 {
            if !deadline.may_continue() {
                println!("{pool}: cancelled after {:?}", deadline.elapsed());
                return Attempt::Cancelled;
            }
            clock.advance(Duration::from_secs(1));
        }
        Attempt::<_, String>::Done(format!("finished on {pool}"))
    });
    match outcome.status {
        RunStatus::Ok(msg) => println!("{msg}; attempts {}, now {:?}", outcome.attempts.len(), clock.now()),
        other => println!("{other:?}"),
    }
}
