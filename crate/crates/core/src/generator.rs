//! Random task-set generation with utilization-first sampling: draw the total
//! utilization split UUniFast-style, draw periods uniformly, derive integer
//! execution times, then nudge them until the achieved utilization lands
//! within tolerance of the target.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::GenError;
use crate::task::{Region, Task, TaskSet, Tick};

/// Achieved total utilization must land within this of the target.
pub const UTIL_TOLERANCE: f64 = 0.02;

/// UUniFast: split `total` into `n` non-negative shares, uniformly over the
/// simplex.
fn uunifast(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
    let mut shares = vec![0.0; n];
    let mut rest = total;
    for i in (1..n).rev() {
        let s = rest * rng.gen::<f64>().powf(1.0 / i as f64);
        shares[i] = rest - s;
        rest = s;
    }
    shares[0] = rest;
    shares
}

/// Generate `n` implicit-deadline tasks with total utilization within
/// `UTIL_TOLERANCE` of `target_u`, periods uniform in `[period_lo, period_hi]`,
/// integer wcets of at least 1. Deterministic for a given seed.
pub fn generate_taskset(
    n: usize,
    target_u: f64,
    period_lo: Tick,
    period_hi: Tick,
    seed: u64,
) -> Result<TaskSet, GenError> {
    if n == 0 {
        return Err(GenError::ZeroTasks);
    }
    if target_u <= 0.0 {
        return Err(GenError::NonPositiveUtilization);
    }
    if period_lo == 0 || period_lo > period_hi {
        return Err(GenError::EmptyPeriodRange);
    }
    // Integer wcets force at least 1/T_max utilization per task.
    let min_reachable = n as f64 / period_hi as f64;
    if target_u + UTIL_TOLERANCE < min_reachable {
        return Err(GenError::Unreachable {
            target: target_u,
            n,
            lo: period_lo,
            hi: period_hi,
            min: min_reachable,
        });
    }
    if target_u - UTIL_TOLERANCE > n as f64 {
        return Err(GenError::Unreachable {
            target: target_u,
            n,
            lo: period_lo,
            hi: period_hi,
            min: n as f64,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const ATTEMPTS: usize = 200;
    for _ in 0..ATTEMPTS {
        let shares = uunifast(&mut rng, n, target_u);
        if shares.iter().any(|u| *u > 1.0) {
            // A share above 1 cannot fit one task; redraw (UUniFast-discard).
            continue;
        }
        let mut tasks: Vec<Task> = Vec::with_capacity(n);
        for (i, share) in shares.iter().enumerate() {
            let period = rng.gen_range(period_lo..=period_hi);
            let wcet = ((share * period as f64).round() as Tick).clamp(1, period);
            tasks.push(Task::implicit(i as u32 + 1, wcet, period, Region::DynamicEdf));
        }
        if repair(&mut tasks, target_u) {
            let mut ts = TaskSet::new(tasks);
            ts.strict_mode = true;
            return Ok(ts);
        }
    }
    Err(GenError::Exhausted {
        target: target_u,
        attempts: ATTEMPTS,
    })
}

/// Greedy +-1 wcet adjustment toward the target; true when within tolerance.
fn repair(tasks: &mut [Task], target_u: f64) -> bool {
    for _ in 0..10_000 {
        let total: f64 = tasks.iter().map(Task::utilization).sum();
        let gap = target_u - total;
        if gap.abs() <= UTIL_TOLERANCE {
            return true;
        }
        // Adjust the task whose single-tick change moves closest to the gap
        // without crossing validity bounds.
        let candidate = tasks
            .iter()
            .enumerate()
            .filter(|(_, t)| {
                if gap > 0.0 {
                    t.wcet < t.period
                } else {
                    t.wcet > 1
                }
            })
            .min_by(|(_, a), (_, b)| {
                let da = (1.0 / a.period as f64 - gap.abs()).abs();
                let db = (1.0 / b.period as f64 - gap.abs()).abs();
                da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
            })
            .map(|(i, _)| i);
        let Some(i) = candidate else { return false };
        if gap > 0.0 {
            tasks[i].wcet += 1;
        } else {
            tasks[i].wcet -= 1;
        }
        tasks[i].deadline = tasks[i].period;
    }
    false
}
