//! Independent re-derivation of one environment slot, shared by the property
//! tests and the acceptance suite.
#![allow(dead_code)]

use offload_core::config::{RewardMode, SimConfig};
use offload_core::env::{Action, ChannelState, MecEnv, MinerState, SlotReport};

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

/// Per-task latency and energy straight from the cost formulas.
pub fn oracle_branch(cfg: &SimConfig, bits: f64, offload: bool, queue_cycles: f64) -> (f64, f64) {
    if offload {
        let uplink = bits / cfg.uplink_rate_bits_per_s;
        let wait = queue_cycles / cfg.mec_capacity_cycles_per_s;
        let proc = bits * cfg.cycles_per_bit / cfg.mec_capacity_cycles_per_s;
        let f = cfg.mec_capacity_cycles_per_s;
        let energy = cfg.miner_tx_power_w * uplink
            + cfg.mec_energy_coeff * f.powi(3) * proc
            + cfg.mec_circuit_power_w * wait;
        (uplink + wait + proc, energy)
    } else {
        (bits * cfg.local_time_s_per_bit, bits * cfg.local_energy_j_per_bit)
    }
}

/// Checks one slot against the state before it. `before` and `queue_before`
/// are the miners and queue observed just before `step`.
pub fn check_slot(
    cfg: &SimConfig,
    before: &[MinerState],
    queue_before: f64,
    actions: &[Action],
    report: &SlotReport,
    after: &[MinerState],
    queue_after: f64,
) -> Result<(), String> {
    const TOL: f64 = 1e-12;
    check(report.queue_before == queue_before, || {
        format!("queue snapshot {} != {}", report.queue_before, queue_before)
    })?;

    // Queue conservation.
    let mut added = 0.0;
    for (miner, action) in before.iter().zip(actions) {
        for (task, &x) in miner.tasks.iter().zip(&action.offload) {
            if x {
                added += task.total_bits() * task.cycles_per_bit;
            }
        }
    }
    check(rel_close(report.cycles_added, added, TOL), || {
        format!("cycles added {} != {}", report.cycles_added, added)
    })?;
    let drained = cfg.mec_parallel_units * cfg.mec_capacity_cycles_per_s * cfg.slot_duration_s;
    let expected_queue = (queue_before + added - drained).max(0.0);
    check(
        rel_close(report.queue_after, expected_queue, TOL) && report.queue_after == queue_after,
        || format!("queue after {} != {}", report.queue_after, expected_queue),
    )?;
    check(report.queue_after >= 0.0, || "negative queue".into())?;

    for (n, ((miner, action), out)) in before.iter().zip(actions).zip(&report.outcomes).enumerate() {
        let good = miner.channel == ChannelState::Good;
        let mut energies = Vec::new();
        let mut latency: f64 = 0.0;
        let mut privacy = 0.0;
        let mut violations = 0;
        for (m, ((task, &x), t)) in miner.tasks.iter().zip(&action.offload).zip(&out.tasks).enumerate() {
            let d = task.total_bits();
            let where_ = || format!("miner {n} task {m}");

            // Buffer conservation.
            let processed = if x { d } else { d.min(cfg.local_bit_budget_per_slot) };
            let carry = (task.buffered_bits + task.new_bits - processed).max(0.0);
            check(rel_close(t.carryover_bits, carry, TOL), || {
                format!("{}: carryover {} != {}", where_(), t.carryover_bits, carry)
            })?;
            check(after[n].tasks[m].buffered_bits == t.carryover_bits, || {
                format!("{}: next D0 differs from carryover", where_())
            })?;
            check(t.bits_processed + t.carryover_bits <= d * (1.0 + TOL) + 1e-9, || {
                format!("{}: bits created", where_())
            })?;

            // Privacy branch exclusivity.
            let usage = if good {
                (task.buffered_bits - if x { d } else { 0.0 }).abs()
            } else {
                0.0
            };
            let location = if x && d > 0.0 && !good { 1.0 } else { 0.0 };
            check(rel_close(t.usage_privacy_bits, usage, TOL), || {
                format!("{}: usage privacy {} != {}", where_(), t.usage_privacy_bits, usage)
            })?;
            check(t.location_privacy == location, || {
                format!("{}: location privacy {} != {}", where_(), t.location_privacy, location)
            })?;
            check(!(t.usage_privacy_bits > 0.0 && t.location_privacy > 0.0), || {
                format!("{}: both privacy branches active", where_())
            })?;
            check(!(t.location_privacy > 0.0 && !x), || {
                format!("{}: location privacy without offloading", where_())
            })?;
            privacy += usage / cfg.privacy_unit_bits + cfg.privacy_location_weight * location;

            // Latency and energy recomputation.
            let (lat, en) = oracle_branch(cfg, d, x, queue_before);
            check(rel_close(t.latency_s, lat, TOL) && rel_close(t.energy_j, en, TOL), || {
                format!("{}: branch ({}, {}) != ({lat}, {en})", where_(), t.latency_s, t.energy_j)
            })?;
            latency = latency.max(lat);
            energies.push(en);
            if lat > cfg.deadline_s {
                violations += 1;
            }
        }
        let energy: f64 = energies.iter().sum();
        let beta = cfg.beta;
        let cost: f64 = energies.iter().map(|e| beta * e + (1.0 - beta) * latency).sum();
        check(rel_close(out.latency_s, latency, TOL), || {
            format!("miner {n}: latency {} != {latency}", out.latency_s)
        })?;
        check(rel_close(out.energy_j, energy, TOL), || {
            format!("miner {n}: energy {} != {energy}", out.energy_j)
        })?;
        check(rel_close(out.cost, cost, TOL), || format!("miner {n}: cost {} != {cost}", out.cost))?;
        check(rel_close(out.privacy, privacy, TOL), || {
            format!("miner {n}: privacy {} != {privacy}", out.privacy)
        })?;
        check(out.deadline_violations() == violations, || {
            format!("miner {n}: violations {} != {violations}", out.deadline_violations())
        })?;

        // Reward decomposition, from the recorded components.
        let mining = match cfg.reward_mode {
            RewardMode::Eq17 => cfg.mining_weight * out.mining_reward,
            RewardMode::Eq21 => 0.0,
        };
        let reward = cfg.privacy_weight * out.privacy + mining
            - cfg.cost_weight * out.cost
            - cfg.deadline_penalty * violations as f64;
        check(rel_close(out.reward, reward, 1e-12) || (out.reward - reward).abs() < 1e-12, || {
            format!("miner {n}: reward {} != {reward}", out.reward)
        })?;
        check(out.next_observation == after[n].observation(), || {
            format!("miner {n}: next observation mismatch")
        })?;
    }
    Ok(())
}

/// Plays `actions` from a reset with `seed`, checking every slot.
pub fn check_episode(cfg: &SimConfig, seed: u64, actions: &[Vec<Action>]) -> Result<(), String> {
    let mut cfg = cfg.clone();
    cfg.rng_seed = seed;
    cfg.total_slots = actions.len().max(1);
    let mut env = MecEnv::new(cfg.clone()).map_err(|e| e.to_string())?;
    for (t, slot_actions) in actions.iter().enumerate() {
        let before = env.miners().to_vec();
        let q = env.queue().pending_cycles;
        let report = env.step(slot_actions).map_err(|e| e.to_string())?;
        check_slot(
            &cfg,
            &before,
            q,
            slot_actions,
            &report,
            env.miners(),
            env.queue().pending_cycles,
        )
        .map_err(|e| format!("slot {t}: {e}"))?;
    }
    Ok(())
}
