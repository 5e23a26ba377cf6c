//! Selected solvers handed to the SCBA workers.

use crate::bt::BlockMatrix;
use crate::dist::{assemble_solution, dist_selected_solve, make_partition_plan, InProcessComm, LocalSolution, LocalSystem};
use crate::error::{Error, Result};
use crate::flops;
use crate::rgf::{rgf_solve, SelectedSolution};
use crate::scba::run::SelectedSolver;

/// Nested-dissection solve over `p_s` spatial partitions, one thread each.
///
/// The flops of the partition threads are added to the calling thread's
/// counter, so per-category accounting matches the sequential solver.
#[derive(Clone, Copy, Debug)]
pub struct PartitionedSolver {
    pub p_s: usize,
}

impl PartitionedSolver {
    pub fn new(p_s: usize) -> Result<Self> {
        if p_s == 0 {
            return Err(Error::InvalidInput("p_s must be at least 1".into()));
        }
        Ok(PartitionedSolver { p_s })
    }
}

impl SelectedSolver for PartitionedSolver {
    fn solve(&self, m: &BlockMatrix, b_lesser: Option<&BlockMatrix>, b_greater: Option<&BlockMatrix>) -> Result<SelectedSolution> {
        if self.p_s == 1 {
            return rgf_solve(m, b_lesser, b_greater);
        }
        distributed_solve(m, b_lesser, b_greater, self.p_s)
    }
}

/// Runs [`dist_selected_solve`] on `p_s` threads and gathers the blocks.
/// Unlike [`PartitionedSolver`] this takes the distributed path for
/// `p_s = 1` too.
pub fn distributed_solve(m: &BlockMatrix, b_lesser: Option<&BlockMatrix>, b_greater: Option<&BlockMatrix>, p_s: usize) -> Result<SelectedSolution> {
    let rhs: Vec<&BlockMatrix> = match (b_lesser, b_greater) {
        (Some(l), Some(g)) => vec![l, g],
        (None, None) => vec![],
        _ => return Err(Error::InvalidInput("partitioned solve needs both or neither of B^<, B^>".into())),
    };
    let plan = make_partition_plan(m.n_blocks(), p_s)?;
    let locals = (0..p_s).map(|r| LocalSystem::from_global(m, &rhs, &plan, r)).collect::<Result<Vec<_>>>()?;
    let parts: Vec<Result<LocalSolution>> = std::thread::scope(|s| {
        let handles: Vec<_> = InProcessComm::group(p_s)
            .into_iter()
            .zip(&locals)
            .map(|(c, l)| {
                let plan = &plan;
                s.spawn(move || dist_selected_solve(l, plan, &c))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("partition thread panicked")).collect()
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    flops::add(parts.iter().map(|p| p.partition_flops + p.reduced_flops).sum());
    let mut sol = assemble_solution(parts);
    if rhs.is_empty() {
        sol.lesser = None;
        sol.greater = None;
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_err;
    use crate::rgf::tests::random_system;

    #[test]
    fn partitions_match_sequential() {
        let (m, bl) = random_system(3, 9, 3);
        let bg = bl.scale(crate::linalg::c64(2.0, 0.0));
        let seq = rgf_solve(&m, Some(&bl), Some(&bg)).unwrap();
        for p_s in [1, 2, 3] {
            let sol = PartitionedSolver::new(p_s).unwrap().solve(&m, Some(&bl), Some(&bg)).unwrap();
            for i in 0..9 {
                assert!(rel_err(&sol.retarded.diag[i], &seq.retarded.diag[i]) < 1e-9);
                assert!(rel_err(&sol.lesser.as_ref().unwrap().diag[i], &seq.lesser.as_ref().unwrap().diag[i]) < 1e-9);
            }
        }
    }

    #[test]
    fn partition_flops_reach_the_caller() {
        let (m, bl) = random_system(5, 8, 2);
        let bg = bl.clone();
        let (_, n) = flops::measure(|| PartitionedSolver::new(2).unwrap().solve(&m, Some(&bl), Some(&bg)).unwrap());
        assert!(n > 0);
    }
}
