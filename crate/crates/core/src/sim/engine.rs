use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::power::{power_step, temp_proxy_step, DvfsGovernor};
use super::{misses_deadline, EventRecord, ProcessStats, SimConfig, SimDuration, SimResult, TelemetrySample};
use crate::error::Result;
use crate::partition::{partition_sm_count, Regime};
use crate::workload::ModelProfile;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one process's noise stream. Depends only on the run seed and
/// the process id, so co-runners never perturb it.
pub(crate) fn process_seed(seed: u64, id: u32) -> u64 {
    splitmix64(seed ^ splitmix64(u64::from(id) + 1))
}

struct Pending {
    index: u64,
    issue: f64,
    deadline: f64,
    jitter: f64,
}

struct Running {
    proc: usize,
    job: Pending,
    start: f64,
    setup_until: f64,
    progressing: bool,
    anchor: f64,
    remaining: f64,
    rate: f64,
    occupied: f64,
}

impl Running {
    fn next_event(&self) -> f64 {
        if self.progressing {
            self.anchor + self.remaining / self.rate
        } else {
            self.setup_until
        }
    }
}

struct Proc {
    profile: ModelProfile,
    id: u32,
    ims: f64,
    quota: u64,
    next_index: u64,
    queue: VecDeque<Pending>,
    rng: ChaCha8Rng,
    jitter: f64,
    completed: u64,
    late: u64,
    response_sum: f64,
    response_max: f64,
}

impl Proc {
    fn next_issue(&self) -> Option<f64> {
        (self.next_index < self.quota).then(|| self.next_index as f64 / self.ims)
    }
}

struct Slot {
    procs: Vec<usize>,
    sms: f64,
    bw: f64,
    running: Option<Running>,
    last_proc: Option<usize>,
}

pub(crate) struct Engine<'a> {
    cfg: &'a SimConfig,
    procs: Vec<Proc>,
    slots: Vec<Slot>,
    end_limit: f64,
    events: Vec<EventRecord>,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(cfg: &'a SimConfig) -> Result<Self> {
        let mut procs = Vec::with_capacity(cfg.processes.len());
        for spec in &cfg.processes {
            let profile = cfg.profiles.get(spec.model)?.clone();
            let ims = f64::from(spec.target_ims);
            let quota = match cfg.duration {
                SimDuration::Inferences(n) => n,
                SimDuration::Horizon(h) => ((h * ims) - 1e-6).ceil().max(0.0) as u64,
            };
            let jitter = cfg.jitter_override.unwrap_or(profile.latency_jitter);
            procs.push(Proc {
                profile,
                id: spec.id,
                ims,
                quota,
                next_index: 0,
                queue: VecDeque::new(),
                rng: ChaCha8Rng::seed_from_u64(process_seed(cfg.seed, spec.id)),
                jitter,
                completed: 0,
                late: 0,
                response_sum: 0.0,
                response_max: 0.0,
            });
        }

        let gpu = &cfg.gpu;
        let regime = cfg.plan.regime;
        let slots = match regime {
            Regime::StandAlone => vec![Slot {
                procs: (0..procs.len()).collect(),
                sms: f64::from(gpu.total_sms),
                bw: 1.0,
                running: None,
                last_proc: None,
            }],
            Regime::Mps => (0..procs.len())
                .map(|i| Slot {
                    procs: vec![i],
                    sms: f64::from(gpu.total_sms),
                    bw: 1.0,
                    running: None,
                    last_proc: None,
                })
                .collect(),
            Regime::Mig | Regime::Gc => cfg
                .processes
                .iter()
                .enumerate()
                .map(|(i, spec)| {
                    let part = cfg
                        .plan
                        .partition(spec.partition.expect("validated"))
                        .expect("validated");
                    Slot {
                        procs: vec![i],
                        sms: f64::from(partition_sm_count(regime, part, gpu)),
                        bw: if regime == Regime::Mig { part.mem_share } else { 1.0 },
                        running: None,
                        last_proc: None,
                    }
                })
                .collect(),
        };

        let horizon = match cfg.duration {
            SimDuration::Horizon(h) => h,
            SimDuration::Inferences(_) => procs
                .iter()
                .map(|p| p.quota as f64 / p.ims)
                .fold(0.0, f64::max),
        };

        Ok(Engine {
            cfg,
            procs,
            slots,
            end_limit: horizon + cfg.drain_s,
            events: Vec::new(),
        })
    }

    pub(crate) fn run(mut self) -> SimResult {
        let cfg = self.cfg;
        let period = cfg.telemetry_period_s;
        let mut governor = DvfsGovernor::new(&cfg.gpu, &cfg.dvfs);
        let mut freq = governor.freq_hz();
        let mut temp = cfg.thermal.ambient_c;
        let mut tick = 1u64;
        let mut busy = 0.0;
        let mut telemetry = Vec::new();
        let mut throttle_events = Vec::new();
        let mut t = 0.0;

        loop {
            let t_issue = self
                .procs
                .iter()
                .filter_map(Proc::next_issue)
                .fold(f64::INFINITY, f64::min);
            let t_slot = self
                .slots
                .iter()
                .filter_map(|s| s.running.as_ref().map(Running::next_event))
                .fold(f64::INFINITY, f64::min);
            let queued = self.procs.iter().any(|p| !p.queue.is_empty());
            if t_issue.is_infinite() && t_slot.is_infinite() && !queued {
                break;
            }
            let next_tick = tick as f64 * period;
            let t_next = t_issue.min(t_slot).min(next_tick).min(self.end_limit);

            let occupied: f64 = self
                .slots
                .iter()
                .filter_map(|s| s.running.as_ref().map(|r| r.occupied))
                .sum();
            busy += occupied * (t_next - t);
            t = t_next;

            self.complete_due(t);
            if t >= self.end_limit {
                break;
            }
            self.issue_due(t);
            self.dispatch(t);

            if t >= next_tick {
                let power = power_step(&cfg.gpu, &cfg.dvfs, busy / period, freq);
                temp = temp_proxy_step(temp, power, period, &cfg.thermal);
                telemetry.push(TelemetrySample {
                    t_s: t,
                    power_w: power,
                    freq_hz: freq,
                    temp_c: temp,
                });
                let (next_freq, throttled) = governor.dvfs_step(power, period);
                if throttled {
                    throttle_events.push(t);
                }
                freq = next_freq;
                busy = 0.0;
                tick += 1;
            }

            self.update_rates(t, freq);
        }

        self.finish(t, telemetry, throttle_events)
    }

    fn complete_due(&mut self, t: f64) {
        for s in 0..self.slots.len() {
            let Some(r) = self.slots[s].running.as_mut() else {
                continue;
            };
            if !r.progressing {
                if r.setup_until <= t {
                    r.progressing = true;
                    r.anchor = r.setup_until;
                    r.remaining = 1.0;
                    r.rate = f64::NAN;
                }
                continue;
            }
            if r.next_event() > t {
                continue;
            }
            let r = self.slots[s].running.take().expect("checked above");
            self.slots[s].last_proc = Some(r.proc);
            let p = &mut self.procs[r.proc];
            let late = misses_deadline(t, r.job.deadline);
            let response = t - r.job.issue;
            p.completed += 1;
            p.late += u64::from(late);
            p.response_sum += response;
            p.response_max = p.response_max.max(response);
            if self.cfg.record_events {
                self.events.push(EventRecord {
                    t_issue: r.job.issue,
                    t_start: r.start,
                    t_end: t,
                    process: p.id,
                    deadline: r.job.deadline,
                    timeout: late,
                });
            }
        }
    }

    fn issue_due(&mut self, t: f64) {
        for p in &mut self.procs {
            while let Some(at) = p.next_issue() {
                if at > t {
                    break;
                }
                let index = p.next_index;
                let u: f64 = if p.jitter > 0.0 { p.rng.gen::<f64>() } else { 0.0 };
                p.queue.push_back(Pending {
                    index,
                    issue: at,
                    deadline: (index + 1) as f64 / p.ims,
                    jitter: 1.0 + p.jitter * u,
                });
                p.next_index += 1;
            }
        }
    }

    fn dispatch(&mut self, t: f64) {
        for s in 0..self.slots.len() {
            if self.slots[s].running.is_some() {
                continue;
            }
            // FIFO across the slot's processes, ties by process id.
            let pick = self.slots[s]
                .procs
                .iter()
                .copied()
                .filter_map(|i| self.procs[i].queue.front().map(|j| (j.issue, self.procs[i].id, j.index, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((_, _, _, pi)) = pick else {
                continue;
            };
            let job = self.procs[pi].queue.pop_front().expect("front exists");
            let switching = self.cfg.plan.regime == Regime::StandAlone
                && self.slots[s].last_proc.is_some_and(|last| last != pi);
            let cost = if switching { self.procs[pi].profile.switch_cost_s } else { 0.0 };
            self.slots[s].running = Some(Running {
                proc: pi,
                job,
                start: t,
                setup_until: t + cost,
                progressing: cost <= 0.0,
                anchor: t,
                remaining: 1.0,
                rate: f64::NAN,
                occupied: 0.0,
            });
        }
    }

    fn update_rates(&mut self, t: f64, freq: f64) {
        let regime = self.cfg.plan.regime;
        let n_exec = self.slots.iter().filter(|s| s.running.is_some()).count();
        let total = f64::from(self.cfg.gpu.total_sms);

        let mps_shares = if regime == Regime::Mps {
            let demands: Vec<f64> = self
                .slots
                .iter()
                .map(|s| match &s.running {
                    Some(r) => f64::from(self.procs[r.proc].profile.sm_saturation).min(total),
                    None => 0.0,
                })
                .collect();
            water_fill(total, &demands)
        } else {
            Vec::new()
        };

        for (si, slot) in self.slots.iter_mut().enumerate() {
            let Some(r) = slot.running.as_mut() else {
                continue;
            };
            let profile = &self.procs[r.proc].profile;
            let others = n_exec > 1;
            let (sms, bw, inflation) = match regime {
                Regime::StandAlone => (slot.sms, 1.0, 1.0),
                Regime::Mps => (
                    mps_shares[si],
                    1.0 / n_exec as f64,
                    if others { 1.0 + self.cfg.mps_interference } else { 1.0 },
                ),
                Regime::Mig => (
                    slot.sms,
                    slot.bw,
                    if others { 1.0 + self.cfg.mig_residual_eps } else { 1.0 },
                ),
                Regime::Gc => (slot.sms, 1.0 / n_exec as f64, 1.0),
            };
            r.occupied = profile.occupied_sms(sms);
            if !r.progressing {
                continue;
            }
            let rate = 1.0 / (profile.latency(sms, freq, bw) * r.job.jitter * inflation);
            if rate != r.rate {
                if r.rate.is_finite() {
                    r.remaining = (r.remaining - (t - r.anchor) * r.rate).max(0.0);
                }
                r.anchor = t;
                r.rate = rate;
            }
        }
    }

    fn finish(self, end: f64, telemetry: Vec<TelemetrySample>, throttle_events: Vec<f64>) -> SimResult {
        let mut overdue = vec![0u64; self.procs.len()];
        let mut in_flight = vec![0u64; self.procs.len()];
        for (i, p) in self.procs.iter().enumerate() {
            for job in &p.queue {
                in_flight[i] += 1;
                overdue[i] += u64::from(misses_deadline(end, job.deadline));
            }
        }
        for s in &self.slots {
            if let Some(r) = &s.running {
                in_flight[r.proc] += 1;
                overdue[r.proc] += u64::from(misses_deadline(end, r.job.deadline));
            }
        }
        let processes = self
            .procs
            .iter()
            .zip(&self.cfg.processes)
            .enumerate()
            .map(|(i, (p, spec))| ProcessStats {
                id: spec.id,
                role: spec.role,
                model: spec.model,
                target_ims: spec.target_ims,
                issued: p.next_index,
                completed: p.completed,
                timeouts: p.late + overdue[i],
                late_completions: p.late,
                in_flight_at_end: in_flight[i],
                mean_response_s: if p.completed > 0 {
                    p.response_sum / p.completed as f64
                } else {
                    0.0
                },
                max_response_s: p.response_max,
            })
            .collect();
        SimResult {
            processes,
            telemetry,
            throttle_events,
            end_time_s: end,
            events: self.events,
        }
    }
}

/// Max-min fair split of `total` among `demands` (zero demand gets nothing).
pub(crate) fn water_fill(total: f64, demands: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..demands.len()).filter(|&i| demands[i] > 0.0).collect();
    order.sort_by(|&a, &b| demands[a].total_cmp(&demands[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; demands.len()];
    let mut left = total;
    let mut k = order.len();
    for i in order {
        let give = demands[i].min(left / k as f64);
        out[i] = give;
        left -= give;
        k -= 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_fill_caps_and_redistributes() {
        let w = water_fill(112.0, &[20.0, 100.0]);
        assert_eq!(w, vec![20.0, 92.0]);
        let w = water_fill(112.0, &[48.0, 48.0]);
        assert_eq!(w, vec![48.0, 48.0]);
        let w = water_fill(16.0, &[8.0, 8.0, 8.0, 8.0]);
        assert_eq!(w, vec![4.0; 4]);
        let w = water_fill(16.0, &[8.0, 0.0, 8.0]);
        assert_eq!(w, vec![8.0, 0.0, 8.0]);
    }

    #[test]
    fn process_seeds_differ() {
        assert_ne!(process_seed(7, 0), process_seed(7, 1));
        assert_eq!(process_seed(7, 3), process_seed(7, 3));
    }
}
