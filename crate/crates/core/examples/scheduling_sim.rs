//! Makespan of a workload with a few heavy tasks under FIFO, random and
//! cost-routed scheduling.

use codefacts::orchestrator::sim::{simulate, SimPools, Strategy, Workload, WorkloadSpec};

fn main() {
    let spec = WorkloadSpec::default();
    let workload = Workload::generate(&spec);
    let pools = SimPools::for_workload(&spec);
    for strategy in [Strategy::Fifo, Strategy::Random { seed: spec.seed }, Strategy::Coordinator] {
        let r = simulate(&workload, &pools, strategy);
        println!(
            "{:<22} makespan {:>8.1}s  timeouts {:>2}  reroutes {}  wasted {:.1}s",
            format!("{strategy:?}"),
            r.makespan,
            r.timeouts, r.reroutes, r.wasted
        );
    }
}
