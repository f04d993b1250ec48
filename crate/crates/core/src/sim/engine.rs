//! One replication of the preemptive M/G/1 queue under a SOAP rank function.
//!
//! Only served jobs age, so waiting ranks are frozen and decision epochs are
//! arrivals, completions, and the moments the served rank meets the best
//! waiting rank. A lone served job runs until the first age where its rank
//! rises past the target level (a segment-tree query over the pieces). Tied
//! jobs whose ranks all increase are served together, each at a rate
//! inversely proportional to its slope so their ranks rise in lockstep; this
//! is the limit of alternating service under the FCFS tie-break.

use rand_distr::{Distribution, Exp};

use super::rng::{stream, ARRIVALS, SIZES};
use crate::dist::JobSizeDistribution;
use crate::error::{Error, Result};
use crate::rank::RankFunction;

pub const MAX_IN_SYSTEM: usize = 10_000_000;
const MAX_STALLS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy)]
pub(crate) struct RepConfig<'a> {
    pub d: &'a JobSizeDistribution,
    pub lambda: f64,
    pub rank: &'a RankFunction,
    pub n_jobs: u64,
    pub warmup: u64,
    pub seed: u64,
    pub rep: u64,
    pub record_busy: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RepOutput {
    /// Response times of measured jobs in completion order.
    pub response: Vec<f64>,
    pub busy_time: f64,
    /// Service delivered: completed sizes plus ages of jobs left at the end.
    pub served_work: f64,
    pub busy_periods: Vec<f64>,
    pub max_in_system: usize,
    pub events: u64,
    /// Arrival sequence numbers matching `response` (trace runs only).
    pub order: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    seq: u64,
    arrival: f64,
    size: f64,
    age: f64,
    /// Age of the spike most recently passed (NaN if none).
    passed: f64,
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Arrival,
    Finish(usize),
    Snap(usize, f64),
    Redecide,
}

fn tie_eps(m: f64) -> f64 {
    1e-9 * m.abs().max(1.0)
}

struct Engine<'a> {
    r: &'a RankFunction,
    jobs: Vec<Job>,
    ranks: Vec<f64>,
    members: Vec<usize>,
    rates: Vec<f64>,
    /// End of the continuous, strictly increasing stretch containing each piece.
    run_end: Vec<f64>,
}

fn increasing_runs(r: &RankFunction) -> Vec<f64> {
    let p = r.pieces();
    let mut out = vec![0.0; p.len()];
    for i in (0..p.len()).rev() {
        out[i] = p[i].end;
        if p[i].slope > 0.0 && i + 1 < p.len() && p[i + 1].slope > 0.0 {
            let left = p[i].at(p[i].end);
            if (left - p[i + 1].value).abs() <= 1e-12 * left.abs().max(1.0) {
                out[i] = out[i + 1];
            }
        }
    }
    out
}

impl Engine<'_> {
    fn at_unpassed_spike(&self, j: &Job) -> bool {
        j.age != j.passed && self.r.spike_at(j.age).is_some()
    }

    fn rank_of(&self, j: &Job) -> f64 {
        if j.age == j.passed {
            self.r.eval_smooth(j.age)
        } else {
            self.r.eval(j.age)
        }
    }

    fn run_of(&self, j: &Job) -> f64 {
        self.run_end[self.r.piece_index(j.age)]
    }

    fn slope_of(&self, j: &Job) -> f64 {
        self.r.pieces()[self.r.piece_index(j.age)].slope
    }

    fn next_spike_after(&self, j: &Job) -> f64 {
        let s = self.r.spikes();
        let k = if self.at_unpassed_spike(j) {
            s.partition_point(|x| x.age < j.age)
        } else {
            s.partition_point(|x| x.age <= j.age)
        };
        s.get(k).map_or(f64::INFINITY, |x| x.age)
    }

    fn earliest(&self, idx: impl Iterator<Item = usize>) -> Option<usize> {
        idx.min_by_key(|&i| self.jobs[i].seq)
    }
}

pub(crate) fn run(cfg: RepConfig<'_>) -> Result<RepOutput> {
    let inter = Exp::new(cfg.lambda).map_err(|e| Error::param("lambda", e.to_string()))?;
    let mut arr_rng = stream(cfg.seed, cfg.rep, ARRIVALS);
    let mut size_rng = stream(cfg.seed, cfg.rep, SIZES);
    let source = || (inter.sample(&mut arr_rng), cfg.d.sample(&mut size_rng));
    run_core(cfg.rank, cfg.n_jobs, cfg.warmup, cfg.record_busy, false, source)
}

/// Runs a fixed list of `(arrival time, size)` pairs sorted by arrival and
/// returns each job's response time in arrival order.
pub fn run_trace(rank: &RankFunction, jobs: &[(f64, f64)]) -> Result<Vec<f64>> {
    if jobs.windows(2).any(|w| w[1].0 < w[0].0) || jobs.iter().any(|j| !(j.1 > 0.0)) {
        return Err(Error::param("jobs", "arrivals must be sorted and sizes positive"));
    }
    let mut k = 0;
    let mut last = 0.0;
    let source = || {
        let out = match jobs.get(k) {
            Some(&(t, s)) => (t - last, s),
            None => (f64::INFINITY, 1.0),
        };
        if let Some(&(t, _)) = jobs.get(k) {
            last = t;
        }
        k += 1;
        out
    };
    let out = run_core(rank, jobs.len() as u64, 0, false, true, source)?;
    let mut resp = vec![0.0; jobs.len()];
    for (&seq, &t) in out.order.iter().zip(&out.response) {
        resp[seq as usize] = t;
    }
    Ok(resp)
}

fn run_core(
    rank: &RankFunction,
    n_jobs: u64,
    warmup: u64,
    record_busy: bool,
    keep_order: bool,
    mut source: impl FnMut() -> (f64, f64),
) -> Result<RepOutput> {
    let measured = n_jobs - warmup;

    let mut eng = Engine {
        r: rank,
        jobs: Vec::new(),
        ranks: Vec::new(),
        members: Vec::new(),
        rates: Vec::new(),
        run_end: increasing_runs(rank),
    };
    let mut out = RepOutput::default();
    let mut now = 0.0;
    let (gap, mut pending_size) = source();
    let mut next_arrival = gap;
    let mut seq = 0u64;
    let mut done = 0u64;
    let mut busy_start = 0.0;
    let mut stalls = 0u64;

    macro_rules! admit {
        () => {{
            eng.jobs.push(Job {
                seq,
                arrival: now,
                size: pending_size,
                age: 0.0,
                passed: f64::NAN,
            });
            seq += 1;
            let (gap, size) = source();
            next_arrival = now + gap;
            pending_size = size;
            if eng.jobs.len() > MAX_IN_SYSTEM {
                return Err(Error::Overflow(format!(
                    "more than {MAX_IN_SYSTEM} jobs in system at time {now}"
                )));
            }
            out.max_in_system = out.max_in_system.max(eng.jobs.len());
        }};
    }

    while done < measured {
        if eng.jobs.is_empty() {
            now = next_arrival;
            busy_start = now;
            admit!();
            continue;
        }
        out.events += 1;

        eng.ranks.clear();
        for j in &eng.jobs {
            eng.ranks.push(eng.rank_of(j));
        }
        let m = eng.ranks.iter().copied().fold(f64::INFINITY, f64::min);
        let eps = tie_eps(m);
        eng.members.clear();
        eng.members
            .extend((0..eng.jobs.len()).filter(|&i| eng.ranks[i] <= m + eps));

        let single = if eng.members.len() == 1 {
            Some(eng.members[0])
        } else {
            let e = eng.earliest(eng.members.iter().copied()).expect("non-empty");
            if eng.slope_of(&eng.jobs[e]) <= 0.0 {
                Some(e)
            } else {
                eng.earliest(
                    eng.members
                        .iter()
                        .copied()
                        .filter(|&i| eng.slope_of(&eng.jobs[i]) <= 0.0),
                )
            }
        };

        // A job chosen while sitting on a spike moves past it; other gated
        // jobs keep the spike rank.
        let mut released = false;
        let chosen: &[usize] = match single {
            Some(ref e) => std::slice::from_ref(e),
            None => &eng.members,
        };
        for &i in chosen {
            if eng.at_unpassed_spike(&eng.jobs[i]) {
                eng.jobs[i].passed = eng.jobs[i].age;
                released = true;
            }
        }
        if released {
            continue;
        }

        let mut dt = next_arrival - now;
        let mut action = Action::Arrival;
        match single {
            Some(e) => {
                let job = eng.jobs[e];
                let w = eng
                    .ranks
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != e)
                    .map(|(_, &v)| v)
                    .fold(f64::INFINITY, f64::min);
                let re = eng.ranks[e];
                let target = if w - re > eps { w - 0.25 * eps } else { w + 2.0 * eps };
                let fin = job.size - job.age;
                if fin < dt {
                    dt = fin;
                    action = Action::Finish(e);
                }
                if let Some(stop) = eng.r.first_above_past(job.age, target) {
                    if stop - job.age < dt {
                        dt = stop - job.age;
                        action = Action::Snap(e, stop);
                    }
                }
                dt = dt.max(0.0);
                now += dt;
                eng.jobs[e].age = (job.age + dt).min(job.size);
            }
            None if {
                let run = eng.run_of(&eng.jobs[eng.members[0]]);
                eng.members.iter().all(|&i| eng.run_of(&eng.jobs[i]) == run)
            } =>
            {
                // All members climb the same continuous increasing stretch,
                // so equal shares keep their ranks together; only leaving
                // the stretch needs a new decision.
                let k = eng.members.len() as f64;
                let w = (0..eng.jobs.len())
                    .filter(|&i| eng.ranks[i] > m + eps)
                    .map(|i| eng.ranks[i])
                    .fold(f64::INFINITY, f64::min);
                for &i in &eng.members {
                    let job = &eng.jobs[i];
                    let fin = (job.size - job.age) * k;
                    if fin < dt {
                        dt = fin;
                        action = Action::Finish(i);
                    }
                    if w.is_finite() && eng.ranks[i] == m {
                        if let Some(stop) = eng.r.first_above_past(job.age, w - 0.5 * eps) {
                            let t = (stop - job.age) * k;
                            if t < dt {
                                dt = t;
                                action = Action::Snap(i, stop);
                            }
                        }
                    }
                    let end = eng.run_of(job);
                    let t_end = (end - job.age) * k;
                    if t_end < dt {
                        dt = t_end;
                        action = Action::Snap(i, end);
                    }
                    let sp = eng.next_spike_after(job);
                    let t_sp = (sp - job.age) * k;
                    if t_sp < dt {
                        dt = t_sp;
                        action = Action::Snap(i, sp);
                    }
                }
                dt = dt.max(0.0);
                now += dt;
                for &i in &eng.members {
                    let job = &mut eng.jobs[i];
                    job.age = (job.age + dt / k).min(job.size);
                }
            }
            None => {
                eng.rates.clear();
                let mut total = 0.0;
                for &i in &eng.members {
                    let inv = 1.0 / eng.slope_of(&eng.jobs[i]);
                    eng.rates.push(inv);
                    total += inv;
                }
                for v in &mut eng.rates {
                    *v /= total;
                }
                let speed = 1.0 / total;
                let w = (0..eng.jobs.len())
                    .filter(|&i| eng.ranks[i] > m + eps)
                    .map(|i| eng.ranks[i])
                    .fold(f64::INFINITY, f64::min);
                if w.is_finite() {
                    let cross = (w - 0.5 * eps - m) / speed;
                    if cross < dt {
                        dt = cross;
                        action = Action::Redecide;
                    }
                }
                for (k, &i) in eng.members.iter().enumerate() {
                    let job = &eng.jobs[i];
                    let rate = eng.rates[k];
                    let fin = (job.size - job.age) / rate;
                    if fin < dt {
                        dt = fin;
                        action = Action::Finish(i);
                    }
                    let end = eng.r.pieces()[eng.r.piece_index(job.age)].end;
                    let t_end = (end - job.age) / rate;
                    if t_end < dt {
                        dt = t_end;
                        action = Action::Snap(i, end);
                    }
                    let sp = eng.next_spike_after(job);
                    let t_sp = (sp - job.age) / rate;
                    if t_sp < dt {
                        dt = t_sp;
                        action = Action::Snap(i, sp);
                    }
                }
                dt = dt.max(0.0);
                now += dt;
                for (k, &i) in eng.members.iter().enumerate() {
                    let job = &mut eng.jobs[i];
                    job.age = (job.age + eng.rates[k] * dt).min(job.size);
                }
            }
        }
        out.busy_time += dt;
        if dt == 0.0 {
            stalls += 1;
            if stalls > MAX_STALLS {
                return Err(Error::Overflow(format!(
                    "no progress after {MAX_STALLS} consecutive decisions at time {now}"
                )));
            }
        } else {
            stalls = 0;
        }

        match action {
            Action::Arrival => admit!(),
            Action::Snap(i, a) => {
                let job = &mut eng.jobs[i];
                job.age = a.min(job.size);
            }
            Action::Redecide => {}
            Action::Finish(i) => {
                let job = eng.jobs.swap_remove(i);
                out.served_work += job.size;
                if job.seq >= warmup && job.seq < n_jobs {
                    out.response.push(now - job.arrival);
                    if keep_order {
                        out.order.push(job.seq);
                    }
                    done += 1;
                }
                if eng.jobs.is_empty() && record_busy {
                    out.busy_periods.push(now - busy_start);
                }
            }
        }
    }
    out.served_work += eng.jobs.iter().map(|j| j.age).sum::<f64>();
    Ok(out)
}
