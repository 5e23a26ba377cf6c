//! Worker orchestration: threads or processes, each running [`scba_run`] on
//! its slice of the energy grid.

use std::net::SocketAddr;
use std::path::Path;
use std::process::{Child, Command, ExitStatus};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{CommBackend, RunConfig};
use super::solver::PartitionedSolver;
use crate::bt::device::{assemble_from_puc, DeviceSpec, Operator, Subsystem};
use crate::bt::{BlockMatrix, EnergyGrid};
use crate::dist::{Communicator, InProcessComm, Packet, SocketComm};
use crate::error::{Error, Result};
use crate::obc::MemoStats;
use crate::rgf::SelectedSolution;
use crate::scba::assemble::Triple;
use crate::scba::layout::TransposeStats;
use crate::scba::observables::{observables, Observables};
use crate::scba::run::{merge_outputs, scba_run, ContactConfig, IterationRecord, Problem, RankOutput, RunSummary, ScbaOptions, Timings};

const TAG_REPORT: u64 = 0x7601;

/// Hamiltonian and bare interaction of a device in their transport blocking.
#[derive(Clone, Debug)]
pub struct Operators {
    pub h: BlockMatrix,
    pub v: BlockMatrix,
}

impl Operators {
    pub fn of(d: &DeviceSpec) -> Result<Self> {
        Ok(Operators {
            h: assemble_from_puc(d, Operator::Hamiltonian, Subsystem::G)?,
            v: assemble_from_puc(d, Operator::Coulomb, Subsystem::W)?,
        })
    }

    pub fn problem<'a>(&'a self, grid: &'a EnergyGrid, contacts: &'a ContactConfig) -> Problem<'a> {
        Problem { h: &self.h, v: &self.v, grid, contacts }
    }
}

/// Observables and run statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub observables: Observables,
    pub summary: RunSummary,
}

/// Runs `workers` energy workers on threads, each solving with `p_s`
/// spatial partitions. Returns the solutions and self-energies in grid order.
pub fn run_threads(p: Problem<'_>, opts: &ScbaOptions, workers: usize, p_s: usize) -> Result<(Vec<SelectedSolution>, Vec<Triple>, RunSummary)> {
    let solver = PartitionedSolver::new(p_s)?;
    let comms = InProcessComm::group(workers.max(1));
    let outs: Vec<Result<RankOutput>> = thread::scope(|s| {
        let handles: Vec<_> = comms
            .into_iter()
            .map(|c| {
                let solver = &solver;
                s.spawn(move || scba_run(p, opts, &c, solver))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("energy worker panicked")).collect()
    });
    let outs = outs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(merge_outputs(outs))
}

/// What a worker process reports back to rank 0.
#[derive(Serialize, Deserialize)]
struct WorkerReport {
    rank: usize,
    observables: Observables,
    history: Vec<IterationRecord>,
    converged: bool,
    timings: Timings,
    memo: MemoStats,
    transpose: TransposeStats,
}

impl WorkerReport {
    fn new(out: RankOutput, ops: &Operators, grid: &EnergyGrid) -> Result<Self> {
        Ok(WorkerReport {
            rank: out.rank,
            observables: observables(&ops.h, grid, out.energies.start, &out.g)?,
            history: out.history,
            converged: out.converged,
            timings: out.timings,
            memo: out.memo,
            transpose: out.transpose,
        })
    }

    fn to_packet(&self) -> Result<Packet> {
        let bytes = serde_json::to_vec(self).map_err(|e| Error::Comm(e.to_string()))?;
        let mut p = Packet::new(TAG_REPORT);
        p.ints.push(bytes.len() as u64);
        p.ints.extend(bytes.chunks(8).map(|c| {
            let mut w = [0u8; 8];
            w[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(w)
        }));
        Ok(p)
    }

    fn from_packet(p: &Packet) -> Result<Self> {
        let n = *p.ints.first().ok_or_else(|| Error::Comm("empty worker report".into()))? as usize;
        let mut bytes: Vec<u8> = p.ints[1..].iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(n);
        serde_json::from_slice(&bytes).map_err(|e| Error::Comm(format!("worker report: {e}")))
    }
}

fn combine(mut reports: Vec<WorkerReport>) -> RunResult {
    reports.sort_by_key(|r| r.rank);
    let mut summary = RunSummary {
        converged: reports.iter().all(|r| r.converged),
        iterations: reports.first().map_or(0, |r| r.history.len()),
        history: reports.first().map(|r| r.history.clone()).unwrap_or_default(),
        ..Default::default()
    };
    let mut parts = Vec::with_capacity(reports.len());
    for r in reports {
        summary.timings.merge(&r.timings);
        summary.memo.merge(&r.memo);
        summary.transpose.merge(&r.transpose);
        parts.push(r.observables);
    }
    RunResult { observables: Observables::concat(parts), summary }
}

/// One worker process: joins the group at `root` and reports to rank 0.
pub fn dist_worker(config: &RunConfig, root: SocketAddr, rank: usize, size: usize) -> Result<()> {
    let device = config.device_spec()?;
    let ops = Operators::of(&device)?;
    let grid = config.energy_grid()?;
    let comm = SocketComm::connect(root, rank, size)?;
    let out = scba_run(ops.problem(&grid, &config.contacts), &config.options(), &comm, &PartitionedSolver::new(config.dist.p_s)?)?;
    comm.send(0, WorkerReport::new(out, &ops, &grid)?.to_packet()?)
}

/// Kills every child once one of them fails, so that rank 0 stops waiting.
fn supervise(mut children: Vec<Child>) -> Vec<std::io::Result<ExitStatus>> {
    let mut status: Vec<Option<std::io::Result<ExitStatus>>> = children.iter().map(|_| None).collect();
    loop {
        let mut failed = false;
        for (c, s) in children.iter_mut().zip(status.iter_mut()) {
            if s.is_none() {
                match c.try_wait() {
                    Ok(Some(st)) => {
                        failed |= !st.success();
                        *s = Some(Ok(st));
                    }
                    Ok(None) => {}
                    Err(e) => {
                        failed = true;
                        *s = Some(Err(e));
                    }
                }
            }
        }
        if failed {
            for (c, s) in children.iter_mut().zip(status.iter_mut()) {
                if s.is_none() {
                    let _ = c.kill();
                    *s = Some(c.wait());
                }
            }
        }
        if status.iter().all(Option::is_some) {
            return status.into_iter().map(|s| s.expect("all done")).collect();
        }
        thread::sleep(Duration::from_millis(20));
    }
}

/// Runs the workers as processes of `worker_exe`, which must implement the
/// hidden `dist-worker` subcommand. The configuration is handed over through
/// a file in the output directory.
pub fn run_processes(config: &RunConfig, worker_exe: &Path) -> Result<RunResult> {
    let size = config.worker_count();
    let device = config.device_spec()?;
    let ops = Operators::of(&device)?;
    let grid = config.energy_grid()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let cfg_path = config.output_dir.join(".worker_config.toml");
    let text = toml::to_string(config).map_err(|e| Error::InvalidInput(format!("cannot serialize configuration: {e}")))?;
    std::fs::write(&cfg_path, text)?;

    let listener = SocketComm::bind_root("127.0.0.1:0")?;
    let root = listener.local_addr()?;
    let mut children = Vec::with_capacity(size - 1);
    for rank in 1..size {
        let child = Command::new(worker_exe)
            .arg("dist-worker")
            .arg("--config")
            .arg(&cfg_path)
            .args(["--root", &root.to_string(), "--rank", &rank.to_string(), "--size", &size.to_string()])
            .spawn();
        match child {
            Ok(c) => children.push(c),
            Err(e) => {
                for mut c in children {
                    let _ = c.kill();
                    let _ = c.wait();
                }
                return Err(e.into());
            }
        }
    }
    let monitor = thread::spawn(move || supervise(children));
    let result = (|| -> Result<RunResult> {
        let comm = SocketComm::accept_group(listener, size)?;
        let out = scba_run(ops.problem(&grid, &config.contacts), &config.options(), &comm, &PartitionedSolver::new(config.dist.p_s)?)?;
        let mut reports = vec![WorkerReport::new(out, &ops, &grid)?];
        for r in 1..size {
            reports.push(WorkerReport::from_packet(&comm.recv(r, TAG_REPORT)?)?);
        }
        Ok(combine(reports))
    })();
    let statuses = monitor.join().expect("supervisor panicked");
    let _ = std::fs::remove_file(&cfg_path);
    let result = result?;
    for (rank, s) in statuses.into_iter().enumerate() {
        let s = s?;
        if !s.success() {
            return Err(Error::Comm(format!("worker process {} exited with {s}", rank + 1)));
        }
    }
    Ok(result)
}

/// Runs the configured calculation. `worker_exe` is only used by the
/// multi-process backend.
pub fn execute(config: &RunConfig, worker_exe: Option<&Path>) -> Result<RunResult> {
    config.validate()?;
    match config.dist.backend {
        CommBackend::InProcess => {
            let device = config.device_spec()?;
            let ops = Operators::of(&device)?;
            let grid = config.energy_grid()?;
            let (g, _, summary) = run_threads(ops.problem(&grid, &config.contacts), &config.options(), config.worker_count(), config.dist.p_s)?;
            Ok(RunResult { observables: observables(&ops.h, &grid, 0, &g)?, summary })
        }
        CommBackend::MultiProcess => {
            let exe = worker_exe.ok_or_else(|| Error::InvalidInput("multi_process backend needs a worker executable".into()))?;
            run_processes(config, exe)
        }
    }
}
