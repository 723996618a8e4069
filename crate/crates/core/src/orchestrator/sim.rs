//! Discrete-event model of a batch of analysis tasks on worker pools,
//! used to compare dispatch strategies without running real work.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SimTask {
    pub id: usize,
    /// Seconds on a standard worker.
    pub duration: f64,
    pub estimated_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub tasks: Vec<SimTask>,
}

/// Shape of the shipped workload.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub tasks: usize,
    pub heavy: usize,
    /// Mean duration of an ordinary task, seconds.
    pub base: f64,
    /// Heavy tasks take `heavy_factor * base`.
    pub heavy_factor: f64,
    /// Ordinary durations vary uniformly by this fraction either way.
    pub jitter: f64,
    /// Cost units per second of work.
    pub cost_per_second: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            tasks: 100,
            heavy: 3,
            base: 100.0,
            heavy_factor: 10.0,
            jitter: 0.2,
            cost_per_second: 1000.0,
            seed: 7,
        }
    }
}

impl Workload {
    pub fn generate(spec: &WorkloadSpec) -> Workload {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut durations: Vec<f64> = (0..spec.tasks - spec.heavy)
            .map(|_| spec.base * (1.0 + rng.gen_range(-spec.jitter..=spec.jitter)))
            .collect();
        durations.extend(std::iter::repeat(spec.base * spec.heavy_factor).take(spec.heavy));
        durations.shuffle(&mut rng);
        let tasks = durations
            .into_iter()
            .enumerate()
            .map(|(id, duration)| SimTask { id, duration, estimated_cost: duration * spec.cost_per_second })
            .collect();
        Workload { tasks }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPools {
    pub standard_workers: usize,
    /// Per-attempt limit on standard workers, seconds.
    pub limit: f64,
    pub long_workers: usize,
    pub long_limit: f64,
    /// How much faster a long-run worker gets through the same task.
    pub long_speedup: f64,
    /// Pre-routing threshold on estimated cost.
    pub hdt_threshold: f64,
    /// Attempts the plain strategies make before giving up on a task.
    pub max_attempts: u32,
}

impl SimPools {
    /// Four standard workers with a limit just under the heavy tasks'
    /// duration, one long-run worker.
    pub fn for_workload(spec: &WorkloadSpec) -> SimPools {
        let heavy = spec.base * spec.heavy_factor;
        SimPools {
            standard_workers: 4,
            limit: 0.9 * heavy,
            long_workers: 1,
            long_limit: 4.0 * heavy,
            long_speedup: 2.0,
            hdt_threshold: spec.base * (1.0 + spec.jitter) * 2.0 * spec.cost_per_second,
            max_attempts: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Every worker takes the next task in arrival order.
    Fifo,
    /// Each task goes to a worker chosen uniformly at random.
    Random { seed: u64 },
    /// Cost-based pre-routing to the long-run pool plus reroute on timeout.
    Coordinator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub makespan: f64,
    pub completed: usize,
    pub timeouts: usize,
    pub reroutes: usize,
    /// Worker-seconds spent on attempts that were cut off.
    pub wasted: f64,
}

/// Plays `workload` through `pools` with `strategy`.
///
/// The plain strategies use every worker (standard and long-run) under the
/// standard limit and retry a timed-out task in place up to
/// `max_attempts` times. The coordinator keeps the pools apart.
pub fn simulate(workload: &Workload, pools: &SimPools, strategy: Strategy) -> SimReport {
    match strategy {
        Strategy::Fifo => plain(workload, pools, None),
        Strategy::Random { seed } => plain(workload, pools, Some(seed)),
        Strategy::Coordinator => coordinator(workload, pools),
    }
}

fn earliest(free: &[f64]) -> usize {
    let mut best = 0;
    for (i, &t) in free.iter().enumerate() {
        if t < free[best] {
            best = i;
        }
    }
    best
}

fn plain(workload: &Workload, pools: &SimPools, random: Option<u64>) -> SimReport {
    let workers = pools.standard_workers + pools.long_workers;
    let mut free = vec![0.0f64; workers];
    let mut rng = random.map(ChaCha8Rng::seed_from_u64);
    let mut report = SimReport { makespan: 0.0, completed: 0, timeouts: 0, reroutes: 0, wasted: 0.0 };
    for t in &workload.tasks {
        let w = match rng.as_mut() {
            Some(r) => r.gen_range(0..workers),
            None => earliest(&free),
        };
        if t.duration <= pools.limit {
            free[w] += t.duration;
            report.completed += 1;
        } else {
            let spent = pools.limit * f64::from(pools.max_attempts);
            free[w] += spent;
            report.wasted += spent;
            report.timeouts += 1;
        }
    }
    report.makespan = free.iter().copied().fold(0.0, f64::max);
    report
}

fn coordinator(workload: &Workload, pools: &SimPools) -> SimReport {
    let mut std_free = vec![0.0f64; pools.standard_workers];
    let mut long_free = vec![0.0f64; pools.long_workers];
    let mut report = SimReport { makespan: 0.0, completed: 0, timeouts: 0, reroutes: 0, wasted: 0.0 };
    let long_time = |t: &SimTask| t.duration / pools.long_speedup;
    // Standard pool first; a task cut off there joins the long queue at the
    // moment it was cut off.
    let mut long_queue: Vec<(f64, &SimTask)> = Vec::new();
    for t in &workload.tasks {
        if pools.long_workers > 0 && t.estimated_cost >= pools.hdt_threshold {
            long_queue.push((0.0, t));
            continue;
        }
        let w = earliest(&std_free);
        if t.duration <= pools.limit {
            std_free[w] += t.duration;
            report.completed += 1;
        } else {
            std_free[w] += pools.limit;
            report.wasted += pools.limit;
            if pools.long_workers > 0 {
                report.reroutes += 1;
                long_queue.push((std_free[w], t));
            } else {
                report.timeouts += 1;
            }
        }
    }
    long_queue.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    for (ready, t) in long_queue {
        let w = earliest(&long_free);
        let start = long_free[w].max(ready);
        let d = long_time(t);
        if d <= pools.long_limit {
            long_free[w] = start + d;
            report.completed += 1;
        } else {
            long_free[w] = start + pools.long_limit;
            report.wasted += pools.long_limit;
            report.timeouts += 1;
        }
    }
    report.makespan = std_free.iter().chain(&long_free).copied().fold(0.0, f64::max);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_shape() {
        let spec = WorkloadSpec::default();
        let w = Workload::generate(&spec);
        assert_eq!(w.tasks.len(), 100);
        let pools = SimPools::for_workload(&spec);
        let over: Vec<_> = w.tasks.iter().filter(|t| t.duration > pools.limit).collect();
        assert_eq!(over.len(), 3);
        assert!(over.iter().all(|t| t.duration == 1000.0));
        assert_eq!(Workload::generate(&spec), w);
    }

    #[test]
    fn hand_sized_cases() {
        let task = |id, d: f64| SimTask { id, duration: d, estimated_cost: d };
        let w = Workload { tasks: vec![task(0, 1.0), task(1, 1.0), task(2, 10.0)] };
        let pools = SimPools {
            standard_workers: 1,
            limit: 5.0,
            long_workers: 1,
            long_limit: 20.0,
            long_speedup: 1.0,
            hdt_threshold: 8.0,
            max_attempts: 2,
        };
        // FIFO: worker 0 gets 1 then 10 (2 x 5 wasted); worker 1 gets 1.
        let f = simulate(&w, &pools, Strategy::Fifo);
        assert_eq!((f.makespan, f.timeouts, f.completed), (11.0, 1, 2));
        let c = simulate(&w, &pools, Strategy::Coordinator);
        assert_eq!((c.makespan, c.timeouts, c.reroutes), (10.0, 0, 0));
        // Without pre-routing the heavy task is cut at 5 and finishes on the long worker at 7 + 10.
        let no_pre = SimPools { hdt_threshold: f64::INFINITY, ..pools.clone() };
        let c = simulate(&w, &no_pre, Strategy::Coordinator);
        assert_eq!((c.makespan, c.timeouts, c.reroutes), (17.0, 0, 1));
        let no_long = SimPools { long_workers: 0, ..pools };
        assert_eq!(simulate(&w, &no_long, Strategy::Coordinator).timeouts, 1);
    }

    #[test]
    fn coordinator_never_times_out_on_seeded_workloads() {
        for seed in 0..50 {
            let spec = WorkloadSpec { seed, ..WorkloadSpec::default() };
            let w = Workload::generate(&spec);
            let pools = SimPools::for_workload(&spec);
            let c = simulate(&w, &pools, Strategy::Coordinator);
            let f = simulate(&w, &pools, Strategy::Fifo);
            let r = simulate(&w, &pools, Strategy::Random { seed });
            assert_eq!((c.timeouts, c.completed), (0, 100));
            assert_eq!(f.timeouts, 3);
            assert!(c.makespan < f.makespan && c.makespan < r.makespan, "seed {seed}");
        }
    }
}
