use std::collections::VecDeque;
use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::config::PoolConfig;

/// Time source for deadline checks; tests drive it by hand.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        SystemClock(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(Mutex<Duration>);

impl ManualClock {
    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PoolKind {
    Standard,
    LongRun,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolKind::Standard => "standard",
            PoolKind::LongRun => "longrun",
        })
    }
}

/// Handed to a job attempt; the job asks it before every stage whether it
/// may go on.
pub struct Deadline<'c> {
    clock: &'c dyn Clock,
    start: Duration,
    limit: Duration,
}

impl Deadline<'_> {
    pub fn elapsed(&self) -> Duration {
        self.clock.now().saturating_sub(self.start)
    }

    /// False once the attempt has used up its limit.
    pub fn may_continue(&self) -> bool {
        self.elapsed() < self.limit
    }
}

/// Result of one attempt: finished with a value, cancelled at a stage
/// boundary, or failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attempt<T, E> {
    Done(T),
    Cancelled,
    Failed(E),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttemptReport {
    pub pool: PoolKind,
    pub elapsed: Duration,
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus<T, E> {
    Ok(T),
    Timeout,
    Error(E),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome<T, E> {
    pub status: RunStatus<T, E>,
    pub attempts: Vec<AttemptReport>,
}

impl<T, E> RunOutcome<T, E> {
    pub fn reroutes(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

/// Runs a job with the standard limit; a job cancelled there is run once
/// more on the long-run pool (when it has workers). With `pre_route`, the
/// job starts on the long-run pool and is not retried.
pub fn run_task<T, E>(
    pools: &PoolConfig,
    clock: &dyn Clock,
    pre_route: bool,
    mut job: impl FnMut(PoolKind, &Deadline<'_>) -> Attempt<T, E>,
) -> RunOutcome<T, E> {
    let has_long = pools.longrun.workers > 0;
    let route: &[PoolKind] = match (pre_route && has_long, has_long) {
        (true, _) => &[PoolKind::LongRun],
        (false, true) => &[PoolKind::Standard, PoolKind::LongRun],
        (false, false) => &[PoolKind::Standard],
    };
    let mut attempts = Vec::new();
    for &pool in route {
        let limit = match pool {
            PoolKind::Standard => pools.standard.limit(),
            PoolKind::LongRun => pools.longrun.limit(),
        };
        let deadline = Deadline { clock, start: clock.now(), limit };
        let result = job(pool, &deadline);
        let cancelled = matches!(result, Attempt::Cancelled);
        attempts.push(AttemptReport { pool, elapsed: deadline.elapsed(), cancelled });
        match result {
            Attempt::Done(v) => return RunOutcome { status: RunStatus::Ok(v), attempts },
            Attempt::Failed(e) => return RunOutcome { status: RunStatus::Error(e), attempts },
            Attempt::Cancelled => log::info!("attempt on the {pool} pool hit its limit of {limit:?}"),
        }
    }
    RunOutcome { status: RunStatus::Timeout, attempts }
}

/// A unit of work for [`run_batch`].
pub struct BatchJob<'a, T, E> {
    pub pre_route: bool,
    pub run: Box<dyn Fn(PoolKind, &Deadline<'_>) -> Attempt<T, E> + Send + Sync + 'a>,
}

struct Queues {
    standard: VecDeque<usize>,
    long: VecDeque<usize>,
    /// Jobs that are queued or running on the standard pool and so may
    /// still be rerouted.
    standard_open: usize,
}

/// Runs `jobs` on two fixed-size worker pools. Standard workers take jobs
/// in order; a job cancelled at its limit moves to the long-run queue.
/// Outcomes are returned in job order.
pub fn run_batch<T: Send, E: Send>(
    pools: &PoolConfig,
    clock: &dyn Clock,
    jobs: Vec<BatchJob<'_, T, E>>,
) -> Vec<RunOutcome<T, E>> {
    let has_long = pools.longrun.workers > 0;
    let mut queues = Queues { standard: VecDeque::new(), long: VecDeque::new(), standard_open: 0 };
    for (i, j) in jobs.iter().enumerate() {
        if j.pre_route && has_long {
            queues.long.push_back(i);
        } else {
            queues.standard.push_back(i);
            queues.standard_open += 1;
        }
    }
    let state = Mutex::new(queues);
    let wake = Condvar::new();
    let results: Mutex<Vec<Option<RunOutcome<T, E>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let partial: Mutex<Vec<Vec<AttemptReport>>> = Mutex::new(vec![Vec::new(); jobs.len()]);

    let attempt = |i: usize, pool: PoolKind| -> Attempt<T, E> {
        let limit = match pool {
            PoolKind::Standard => pools.standard.limit(),
            PoolKind::LongRun => pools.longrun.limit(),
        };
        let deadline = Deadline { clock, start: clock.now(), limit };
        let r = (jobs[i].run)(pool, &deadline);
        let cancelled = matches!(r, Attempt::Cancelled);
        partial.lock().unwrap()[i].push(AttemptReport { pool, elapsed: deadline.elapsed(), cancelled });
        r
    };
    let finish = |i: usize, status: RunStatus<T, E>| {
        let attempts = std::mem::take(&mut partial.lock().unwrap()[i]);
        results.lock().unwrap()[i] = Some(RunOutcome { status, attempts });
    };

    std::thread::scope(|s| {
        for _ in 0..pools.standard.workers {
            s.spawn(|| loop {
                let Some(i) = state.lock().unwrap().standard.pop_front() else { break };
                let r = attempt(i, PoolKind::Standard);
                let mut q = state.lock().unwrap();
                q.standard_open -= 1;
                match r {
                    Attempt::Done(v) => finish(i, RunStatus::Ok(v)),
                    Attempt::Failed(e) => finish(i, RunStatus::Error(e)),
                    Attempt::Cancelled if has_long => q.long.push_back(i),
                    Attempt::Cancelled => finish(i, RunStatus::Timeout),
                }
                drop(q);
                wake.notify_all();
            });
        }
        for _ in 0..pools.longrun.workers {
            s.spawn(|| loop {
                let i = {
                    let mut q = state.lock().unwrap();
                    loop {
                        if let Some(i) = q.long.pop_front() {
                            break Some(i);
                        }
                        if q.standard_open == 0 {
                            break None;
                        }
                        q = wake.wait(q).unwrap();
                    }
                };
                let Some(i) = i else { break };
                match attempt(i, PoolKind::LongRun) {
                    Attempt::Done(v) => finish(i, RunStatus::Ok(v)),
                    Attempt::Failed(e) => finish(i, RunStatus::Error(e)),
                    Attempt::Cancelled => finish(i, RunStatus::Timeout),
                }
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every job finishes")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::config::PoolSpec;

    fn pools(long_workers: usize) -> PoolConfig {
        PoolConfig {
            standard: PoolSpec { workers: 2, time_limit: 5.0 },
            longrun: PoolSpec { workers: long_workers, time_limit: 20.0 },
        }
    }

    /// A job of `stages` one-second stages on the given clock.
    fn staged(clock: &ManualClock, stages: u32) -> impl Fn(PoolKind, &Deadline<'_>) -> Attempt<u32, String> + '_ {
        move |_, d| {
            for _ in 0..stages {
                if !d.may_continue() {
                    return Attempt::Cancelled;
                }
                clock.advance(Duration::from_secs(1));
            }
            Attempt::Done(stages)
        }
    }

    #[test]
    fn fast_job_stays_on_the_standard_pool() {
        let clock = ManualClock::default();
        let out = run_task(&pools(1), &clock, false, staged(&clock, 3));
        assert_eq!(out.status, RunStatus::Ok(3));
        assert_eq!(out.reroutes(), 0);
        assert_eq!(out.attempts[0].pool, PoolKind::Standard);
    }

    #[test]
    fn slow_job_is_rerouted_once() {
        let clock = ManualClock::default();
        let out = run_task(&pools(1), &clock, false, staged(&clock, 12));
        assert_eq!(out.status, RunStatus::Ok(12));
        assert_eq!(out.reroutes(), 1);
        assert!(out.attempts[0].cancelled);
        assert_eq!(out.attempts[0].elapsed, Duration::from_secs(5));
        assert_eq!(out.attempts[1].pool, PoolKind::LongRun);
    }

    #[test]
    fn timeouts() {
        let clock = ManualClock::default();
        let out = run_task(&pools(0), &clock, false, staged(&clock, 12));
        assert_eq!(out.status, RunStatus::Timeout);
        assert_eq!(out.attempts.len(), 1);
        let out = run_task(&pools(1), &clock, false, staged(&clock, 50));
        assert_eq!(out.status, RunStatus::Timeout);
        assert_eq!(out.attempts.len(), 2);
    }

    #[test]
    fn pre_routed_job_starts_long() {
        let clock = ManualClock::default();
        let out = run_task(&pools(1), &clock, true, staged(&clock, 12));
        assert_eq!(out.status, RunStatus::Ok(12));
        assert_eq!(out.attempts.len(), 1);
        assert_eq!(out.attempts[0].pool, PoolKind::LongRun);
        let out = run_task(&pools(0), &clock, true, staged(&clock, 2));
        assert_eq!(out.attempts[0].pool, PoolKind::Standard);
    }

    #[test]
    fn errors_are_not_retried() {
        let clock = ManualClock::default();
        let out: RunOutcome<(), String> = run_task(&pools(1), &clock, false, |_, _| Attempt::Failed("boom".into()));
        assert_eq!(out.status, RunStatus::Error("boom".into()));
        assert_eq!(out.attempts.len(), 1);
    }

    #[test]
    fn batch_runs_every_job_and_reroutes_slow_ones() {
        let clock = SystemClock::new();
        let p = PoolConfig {
            standard: PoolSpec { workers: 3, time_limit: 0.05 },
            longrun: PoolSpec { workers: 1, time_limit: 5.0 },
        };
        let job = |n: usize, slow: bool, pre: bool| BatchJob {
            pre_route: pre,
            run: Box::new(move |_, d: &Deadline<'_>| {
                let stages = if slow { 40 } else { 2 };
                for _ in 0..stages {
                    if !d.may_continue() {
                        return Attempt::<usize, ()>::Cancelled;
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Attempt::Done(n)
            }),
        };
        let jobs: Vec<_> = (0..12).map(|n| job(n, n % 5 == 0, n == 10)).collect();
        let out = run_batch(&p, &clock, jobs);
        for (n, o) in out.iter().enumerate() {
            assert_eq!(o.status, RunStatus::Ok(n));
            let expect = if n == 10 { 1 } else if n % 5 == 0 { 2 } else { 1 };
            assert_eq!(o.attempts.len(), expect, "job {n}");
        }
    }
}
