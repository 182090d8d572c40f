//! Acceptance suite. Runs every criterion, prints one `[PASS]`/`[FAIL]` line
//! each, and exits non-zero on any failure not listed in `KNOWN_FAILURES`.
//! Set `ACCEPTANCE_STRICT=1` to make known failures fatal too.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use kitchen_core::eval::{
    compute_metrics, emit_report, run_experiment, simulate, Condition, Configuration, ExperimentConfig, TipFixture,
};
use kitchen_core::humans::{make_human, HumanKind, LearningPopulation};
use kitchen_core::kitchen::{
    Assignment, JointAction, KitchenConfig, KitchenMdp, KitchenState, ScenarioKind, ScriptedPolicy, SkillMatrix, Stage,
    Subtask, Worker,
};
use kitchen_core::mdp::toy::{BanditMdp, ChainMdp, LobbyAction, LobbyMdp, LobbyState};
use kitchen_core::mdp::{
    derive_seed, exact_q_dp, sample_rollout, Featurizer, Mdp, Mixture, Policy, QFunction, QTable, Rollout,
    UniformPolicy,
};
use kitchen_core::solvers::{exact_objective, fit_q_model, solve_oracle, FittedQ, Mlp, NeuralPolicy, QFitConfig};
use kitchen_core::tips::{
    aggregate_and_filter, enumerate_atomic_tips, infer_tip, ComposedPolicy, CountedTip, FrequencyTable, InferConfig,
    KitchenTip, NoTip, Tip, TipScore, TraceSet,
};
use kitchen_core::trace::{ingest, write_jsonl};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

/// Criteria that cannot hold as stated; the analysis is kept with the
/// project's decision notes.
const KNOWN_FAILURES: &[&str] = &["oracle-optima"];

const CRITERIA: &[(&str, Check)] = &[
    ("oracle-optima", oracle_optima),
    ("scripted-policies", scripted_policies),
    ("composition-laws", composition_laws),
    ("scorer-divergence", scorer_divergence),
    ("end-to-end-inference", end_to_end_inference),
    ("filters", filters),
    ("treatment-effect", treatment_effect),
    ("q-model-quality", q_model_quality),
    ("trace-round-trip", trace_round_trip),
];

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut unexpected = 0;
    for (id, check) in CRITERIA {
        if !only.is_empty() && !only.iter().any(|o| id.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.contains(id);
        match result {
            Ok(detail) => println!("[PASS] {id} ({secs:.1}s): {detail}"),
            Err(detail) => {
                let tag = if known { " (known)" } else { "" };
                println!("[FAIL] {id}{tag} ({secs:.1}s): {detail}");
                if !known || strict {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mdp(kind: ScenarioKind) -> KitchenMdp {
    KitchenMdp::new(kind.config()).unwrap()
}

fn replay_ticks(mdp: &KitchenMdp, actions: &[JointAction]) -> Result<u32, String> {
    let mut s = mdp.initial_state();
    for a in actions {
        mdp.check_action(&s, a).map_err(|e| e.to_string())?;
        s = mdp.next_state(&s, a);
    }
    ensure(s.all_plated(), || "schedule leaves orders unplated".into())?;
    Ok(s.tick)
}

fn oracle_optima() -> Result<String, String> {
    let mut found = Vec::new();
    for (kind, want) in [(ScenarioKind::FullyStaffed, 20), (ScenarioKind::Understaffed, 34)] {
        let m = mdp(kind);
        let start = Instant::now();
        let sol = solve_oracle(&m, 5_000_000).map_err(|e| e.to_string())?;
        let took = start.elapsed();
        let replayed = replay_ticks(&m, &sol.actions)?;
        ensure(replayed == sol.ticks, || format!("{kind}: schedule replays to {replayed}, reported {}", sol.ticks))?;
        ensure(took < Duration::from_secs(60), || format!("{kind}: took {took:?}"))?;
        found.push((kind, want, sol.ticks, took));
    }
    let summary = found
        .iter()
        .map(|(k, want, got, took)| format!("{k} {got} ticks (expected {want}) in {:.2}s", took.as_secs_f64()))
        .collect::<Vec<_>>()
        .join("; ");
    if found.iter().all(|(_, want, got, _)| want == got) {
        Ok(summary)
    } else {
        Err(format!("{summary}; exact search beats the reference plans by one tick"))
    }
}

fn starts(r: &Rollout<KitchenState, JointAction>) -> Vec<(u32, Assignment)> {
    r.steps.iter().flat_map(|s| s.action.assignments().iter().map(move |a| (s.state.tick, *a))).collect()
}

fn tasks_of(r: &Rollout<KitchenState, JointAction>, w: Worker) -> Vec<(u32, Assignment)> {
    starts(r).into_iter().filter(|(_, a)| a.worker == w).collect()
}

/// Ticks at which a worker was free, unassigned, and some task it could take
/// was open, with the open subtasks.
fn idle_with_work(r: &Rollout<KitchenState, JointAction>, w: Worker) -> Vec<(u32, Vec<Subtask>)> {
    r.steps
        .iter()
        .filter(|st| st.state.worker(w).is_idle() && st.action.get(w).is_none())
        .filter_map(|st| {
            let open: Vec<Subtask> = st
                .state
                .available()
                .into_iter()
                .filter(|&(o, t)| !st.action.assignments().iter().any(|a| a.order == o && a.subtask == t))
                .map(|(_, t)| t)
                .collect();
            (!open.is_empty()).then_some((st.state.tick, open))
        })
        .collect()
}

fn cooked_tick(r: &Rollout<KitchenState, JointAction>, order: u8) -> u32 {
    r.steps
        .iter()
        .map(|s| &s.state)
        .chain(std::iter::once(&r.final_state))
        .find(|s| s.stages[order as usize] == Stage::Cooked || s.stages[order as usize] == Stage::Plated)
        .map(|s| s.tick)
        .unwrap()
}

fn scripted_policies() -> Result<String, String> {
    let run = |kind| {
        let m = mdp(kind);
        let r = sample_rollout(&m, &ScriptedPolicy::for_config(m.config()), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        r.verify(&m).unwrap();
        r
    };
    let n = |r: &Rollout<KitchenState, JointAction>, w, s| r.final_state.count(w, s);
    let (chef, sous, server) = (Worker::Chef, Worker::SousChef, Worker::Server);
    let (chop, cook, plate) = (Subtask::Chop, Subtask::Cook, Subtask::Plate);

    let fs = run(ScenarioKind::FullyStaffed);
    ensure(fs.len() == 20, || format!("fully staffed took {}", fs.len()))?;
    let first = &fs.steps[0].action;
    ensure(Worker::ALL.iter().all(|&w| first.get(w).is_some_and(|a| a.subtask == chop)), || "fs (i)".into())?;
    ensure(n(&fs, chef, cook) == 3 && n(&fs, sous, cook) == 1, || "fs (ii) cook counts".into())?;
    let sous_cook = tasks_of(&fs, sous).into_iter().find(|(_, a)| a.subtask == cook).unwrap().1;
    ensure(sous_cook.order == 1, || format!("fs (ii) sous cooked order {}", sous_cook.order + 1))?;
    ensure(n(&fs, server, cook) == 0, || "fs (iii) server cooked".into())?;
    // The server waits through an open cook and takes the first cooked burger to plate.
    let waits = idle_with_work(&fs, server);
    ensure(waits.iter().any(|(_, open)| open.contains(&cook)), || format!("fs (iii) server never waits: {waits:?}"))?;
    let first_cooked = (0..4).min_by_key(|&o| cooked_tick(&fs, o)).unwrap();
    let server_first_plate = tasks_of(&fs, server).into_iter().find(|(_, a)| a.subtask == plate).unwrap().1;
    ensure(server_first_plate.order == first_cooked, || "fs (iii) first plate".into())?;
    ensure(n(&fs, chef, plate) == 0, || "fs (iv) chef plated".into())?;
    ensure(n(&fs, sous, plate) == 1, || "fs (v) sous plates".into())?;
    for w in [chef, sous] {
        for (t, open) in idle_with_work(&fs, w) {
            let excused = w == chef && open.iter().all(|&s| s == plate);
            ensure(excused, || format!("fs (vi) {w} idle at {t} with {open:?} open"))?;
        }
    }
    for (t, open) in &waits {
        ensure(!open.contains(&plate), || format!("fs (vi) server skipped plating at {t}"))?;
    }

    let us = run(ScenarioKind::Understaffed);
    ensure(us.len() == 34, || format!("understaffed took {}", us.len()))?;
    let first = &us.steps[0].action;
    ensure([sous, server].iter().all(|&w| first.get(w).is_some_and(|a| a.subtask == chop)), || "us (i)".into())?;
    ensure(n(&us, sous, cook) == 2 && n(&us, server, cook) == 2, || "us (ii)".into())?;
    let sous_tasks = tasks_of(&us, sous);
    let (t2, second) = sous_tasks[1];
    let cook_open =
        us.steps.iter().find(|s| s.state.tick == t2).unwrap().state.available().iter().any(|(_, s)| *s == cook);
    ensure(second.subtask == chop && cook_open, || "us (iii) sous second task".into())?;
    let server_first3: Vec<Subtask> = tasks_of(&us, server).iter().take(3).map(|(_, a)| a.subtask).collect();
    ensure(server_first3 == [chop, cook, cook], || format!("us (iv) {server_first3:?}"))?;
    ensure(n(&us, sous, chop) == 3 && n(&us, server, chop) == 1, || "us (v)".into())?;
    ensure(n(&us, sous, plate) == 2 && n(&us, server, plate) == 2, || "us (vi)".into())?;
    let mut by_cook: Vec<u8> = (0..4).collect();
    by_cook.sort_by_key(|&o| cooked_tick(&us, o));
    let plated = starts(&us).into_iter().find(|(_, a)| a.order == by_cook[1] && a.subtask == plate).unwrap().0;
    let last_cooked = cooked_tick(&us, by_cook[2]).max(cooked_tick(&us, by_cook[3]));
    ensure(plated >= last_cooked, || format!("us (vii) plated at {plated}, last cook done {last_cooked}"))?;
    for w in [sous, server] {
        let idle = idle_with_work(&us, w);
        ensure(idle.is_empty(), || format!("us (viii) {w} idle: {idle:?}"))?;
    }
    Ok("20 and 34 ticks; all 6 fully staffed and 8 understaffed insights hold".into())
}

/// States along seeded uniform-random play.
fn random_states(m: &KitchenMdp, seed: u64) -> Vec<KitchenState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = sample_rollout(m, &UniformPolicy, &mut rng).unwrap();
    r.steps.into_iter().map(|s| s.state).collect()
}

fn as_map(d: Vec<(JointAction, f64)>) -> BTreeMap<JointAction, i64> {
    let mut out = BTreeMap::new();
    for (a, p) in d {
        *out.entry(a).or_insert(0) += (p * 1e12).round() as i64;
    }
    out.retain(|_, p| *p != 0);
    out
}

fn composition_laws() -> Result<String, String> {
    let mut checked = 0usize;
    for kind in [ScenarioKind::FullyStaffed, ScenarioKind::Understaffed] {
        let m = mdp(kind);
        let bases: Vec<Box<dyn Policy<KitchenMdp>>> =
            vec![Box::new(UniformPolicy), make_human(HumanKind::Greedy, &m), make_human(HumanKind::Myopic, &m)];
        let mut tips: Vec<KitchenTip> = enumerate_atomic_tips(&m).into_iter().map(KitchenTip::Atomic).collect();
        tips.extend(CountedTip::all().into_iter().map(KitchenTip::Counted));
        let states: Vec<KitchenState> = (0..20).flat_map(|seed| random_states(&m, seed)).collect();
        for base in &bases {
            for s in &states {
                let bd = as_map(base.distribution(&m, s));
                let noop = ComposedPolicy { base: base.as_ref(), tip: NoTip };
                ensure(as_map(noop.distribution(&m, s)) == bd, || "never-true tip changed the distribution".into())?;
                for tip in &tips {
                    let raw = ComposedPolicy { base: base.as_ref(), tip: *tip }.distribution(&m, s);
                    let mass: f64 = raw.iter().map(|(_, p)| p).sum();
                    ensure((mass - 1.0).abs() < 1e-9, || format!("{tip}: mass {mass}"))?;
                    let d = as_map(raw);
                    checked += 1;
                    if !tip.is_active(&m, s) {
                        ensure(d == bd, || format!("inactive {tip} changed the distribution"))?;
                        continue;
                    }
                    let ok = match tip {
                        KitchenTip::Atomic(t) => d.keys().all(|a| {
                            a.get(t.worker)
                                == Some(&Assignment { worker: t.worker, order: t.order, subtask: t.subtask })
                        }),
                        KitchenTip::Counted(c) if s.count(c.worker, c.subtask) < c.count => {
                            d.keys().all(|a| a.assigns(c.worker, c.subtask))
                        }
                        KitchenTip::Counted(c) => d.keys().all(|a| !a.assigns(c.worker, c.subtask)),
                    };
                    ensure(ok, || format!("active {tip} not applied with probability 1 in {s:?}"))?;
                }
            }
        }
    }

    // n = 0 masks the assignment in every one of 1,000 seeded rollouts, on
    // crews that would otherwise take it.
    let cases = [
        (ScenarioKind::FullyStaffed, HumanKind::Prefer(Worker::Chef, Subtask::Plate), Worker::Chef, Subtask::Plate),
        (ScenarioKind::Understaffed, HumanKind::Prefer(Worker::Server, Subtask::Cook), Worker::Server, Subtask::Cook),
    ];
    for (kind, human, w, s) in cases {
        let m = mdp(kind);
        let base = make_human(human, &m);
        let tip = CountedTip::never(w, s);
        let composed = ComposedPolicy { base: base.as_ref(), tip };
        let mut unmasked_would = 0;
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[kind as u64]));
            let r = sample_rollout(&m, &composed, &mut rng).unwrap();
            ensure(r.final_state.count(w, s) == 0, || format!("{kind} seed {seed}: {tip} violated"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            unmasked_would +=
                usize::from(sample_rollout(&m, base.as_ref(), &mut rng).unwrap().final_state.count(w, s) > 0);
        }
        ensure(unmasked_would > 900, || format!("{human} rarely takes {w} {s}; the mask test is vacuous"))?;
    }
    Ok(format!("{checked} (state, base, tip) distributions; n=0 masked in 2 x 1000/1000 rollouts"))
}

/// Always the same action per state kind.
struct Habit {
    lobby: LobbyAction,
    fork: LobbyAction,
}

impl Policy<LobbyMdp> for Habit {
    fn distribution(&self, _: &LobbyMdp, s: &LobbyState) -> Vec<(LobbyAction, f64)> {
        match s {
            LobbyState::Fork => vec![(self.fork, 1.0)],
            _ => vec![(self.lobby, 1.0)],
        }
    }
}

/// "In the lobby (or at the fork), do X."
#[derive(Debug, Clone, Copy, PartialEq)]
struct KindTip {
    at_fork: bool,
    action: LobbyAction,
}

impl Tip<LobbyMdp> for KindTip {
    fn is_active(&self, _: &LobbyMdp, s: &LobbyState) -> bool {
        match s {
            LobbyState::Fork => self.at_fork,
            LobbyState::Lobby(_) => !self.at_fork,
            _ => false,
        }
    }
    fn overlay(&self, m: &LobbyMdp, s: &LobbyState, a: &LobbyAction) -> LobbyAction {
        if self.is_active(m, s) {
            self.action
        } else {
            *a
        }
    }
}

/// Expected return by full enumeration of policy and transition branches.
fn exact_return<M: Mdp, P: Policy<M>>(m: &M, p: &P, s: &M::State, t: u32) -> f64 {
    if t >= m.horizon() || m.is_terminal(s) {
        return 0.0;
    }
    p.distribution(m, s)
        .into_iter()
        .map(|(a, pa)| {
            let r = m.reward(s, &a);
            pa * m.transitions(s, &a).into_iter().map(|(n, pn)| pn * (r + exact_return(m, p, &n, t + 1))).sum::<f64>()
        })
        .sum()
}

fn scorer_divergence() -> Result<String, String> {
    let m = LobbyMdp;
    let expert = Habit { lobby: LobbyAction::Wait, fork: LobbyAction::Fix };
    let human = Habit { lobby: LobbyAction::Stroll, fork: LobbyAction::Ignore };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let expert_runs: Vec<_> = (0..10).map(|_| sample_rollout(&m, &expert, &mut rng).unwrap()).collect();
    let human_runs: Vec<_> = (0..10).map(|_| sample_rollout(&m, &human, &mut rng).unwrap()).collect();
    let q = exact_q_dp(&m, 1000).map_err(|e| e.to_string())?;
    let freq = FrequencyTable::from_rollouts(&m, &expert_runs);
    let tips = [
        KindTip { at_fork: false, action: LobbyAction::Wait },
        KindTip { at_fork: false, action: LobbyAction::Stroll },
        KindTip { at_fork: true, action: LobbyAction::Fix },
        KindTip { at_fork: true, action: LobbyAction::Ignore },
    ];
    fn top<Q: QFunction<LobbyMdp>>(
        m: &LobbyMdp,
        runs: &[Rollout<LobbyState, LobbyAction>],
        q: &Q,
        expert: &Habit,
        tips: &[KindTip],
    ) -> (KindTip, Vec<f64>) {
        let set = TraceSet::new(m, runs.iter().collect(), q, expert);
        let deltas: Vec<f64> = tips.iter().map(|t| set.score(m, q, *t).delta).collect();
        let best = (0..tips.len()).fold(0, |b, i| if deltas[i] > deltas[b] { i } else { b });
        (tips[best], deltas)
    }
    let (alg, alg_deltas) = top(&m, &human_runs, &q, &expert, &tips);
    let (base, base_deltas) = top(&m, &human_runs, &freq, &expert, &tips);
    let j0 = exact_return(&m, &human, &m.initial_state(), 0);
    let gain = |t: KindTip| exact_return(&m, &ComposedPolicy { base: &human, tip: t }, &m.initial_state(), 0) - j0;
    let (ga, gb) = (gain(alg), gain(base));
    ensure(alg != base, || format!("both scorers picked {alg:?}"))?;
    ensure(ga > gb, || format!("algorithm tip gains {ga}, baseline tip {gb}"))?;
    ensure(alg == tips[2] && ga == 10.0 && gb == 0.0, || format!("unexpected exact values {alg:?} {ga} {gb}"))?;
    Ok(format!(
        "Q-sum deltas {alg_deltas:?} pick fork/Fix (+{ga} return); frequency deltas {base_deltas:?} pick {:?}/{:?} (+{gb})",
        if base.at_fork { "fork" } else { "lobby" },
        base.action
    ))
}

fn collect(m: &KitchenMdp, human: HumanKind, n: usize, seed: u64) -> Vec<Rollout<KitchenState, JointAction>> {
    let p = make_human(human, m);
    (0..n)
        .map(|i| sample_rollout(m, p.as_ref(), &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]))).unwrap())
        .collect()
}

fn infer_once(kind: ScenarioKind, human: HumanKind, seed: u64) -> Option<CountedTip> {
    let m = mdp(kind);
    let expert = ScriptedPolicy::for_config(m.config());
    let traces = collect(&m, human, 40, seed);
    let FittedQ::Model(q) = fit_q_model(&m, &expert, &[], &QFitConfig { seed, ..QFitConfig::default() }).unwrap()
    else {
        unreachable!()
    };
    infer_tip(&m, &traces, &q, &expert, &InferConfig::default()).unwrap().best.map(|b| b.tip)
}

fn end_to_end_inference() -> Result<String, String> {
    let server_twice = CountedTip { worker: Worker::Server, subtask: Subtask::Cook, count: 2 };
    let chef_never = CountedTip::never(Worker::Chef, Subtask::Plate);
    let us: Vec<_> = (0..10u64)
        .map(|s| infer_once(ScenarioKind::Understaffed, HumanKind::Avoid(Worker::Server, Subtask::Cook), s))
        .collect();
    let fs: Vec<_> = (0..10u64)
        .map(|s| infer_once(ScenarioKind::FullyStaffed, HumanKind::Prefer(Worker::Chef, Subtask::Plate), s))
        .collect();
    let hits_us = us.iter().filter(|t| **t == Some(server_twice)).count();
    let hits_fs = fs.iter().filter(|t| **t == Some(chef_never)).count();
    let show = |v: &[Option<CountedTip>]| v.iter().map(|t| t.map_or("none".into(), |t| t.key())).collect::<Vec<_>>();
    let detail = format!("\"{server_twice}\" on {hits_us}/10 seeds; \"{chef_never}\" on {hits_fs}/10 seeds");
    ensure(hits_us >= 9, || format!("{detail}; understaffed picks {:?}", show(&us)))?;
    ensure(hits_fs == 10, || format!("{detail}; fully staffed picks {:?}", show(&fs)))?;
    Ok(detail)
}

fn filters() -> Result<String, String> {
    let cfg = InferConfig::default();
    let worker = prop_oneof![Just(Worker::Chef), Just(Worker::SousChef), Just(Worker::Server)];
    let subtask = prop_oneof![Just(Subtask::Chop), Just(Subtask::Cook), Just(Subtask::Plate)];
    let score = (worker, subtask, 0u8..4, any::<bool>(), -5.0f64..5.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(
        |(w, s, o, never, d, a, g)| {
            let tip = if never {
                KitchenTip::Counted(CountedTip::never(w, s))
            } else {
                KitchenTip::Atomic(kitchen_core::tips::AtomicTip { order: o, subtask: s, worker: w })
            };
            TipScore { tip, score: d, identity: 0.0, delta: d, applicability: a, disagreement: g }
        },
    );
    let mut runner = TestRunner::new(PropConfig { cases: 2000, ..PropConfig::default() });
    let passes =
        |s: &TipScore<KitchenTip>| s.applicability >= cfg.min_applicability && s.disagreement <= cfg.max_disagreement;
    runner
        .run(&prop::collection::vec(score, 0..60), |pool| {
            for r in aggregate_and_filter(&pool, &cfg) {
                for m in &r.members {
                    let ok = pool.iter().any(|s| s.tip == *m && passes(s));
                    prop_assert!(ok, "{m} surfaced without passing the filters");
                }
                prop_assert!(r.applicability >= cfg.min_applicability && r.disagreement <= cfg.max_disagreement);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // And on a real inference run, against the scored candidates.
    let m = mdp(ScenarioKind::Understaffed);
    let expert = ScriptedPolicy::for_config(m.config());
    let traces = collect(&m, HumanKind::Myopic, 40, 1);
    let FittedQ::Model(q) =
        fit_q_model(&m, &expert, &[], &QFitConfig { rollouts: 100, ..QFitConfig::default() }).unwrap()
    else {
        unreachable!()
    };
    let inf = infer_tip(&m, &traces, &q, &expert, &cfg).map_err(|e| e.to_string())?;
    let by_tip: HashMap<String, &TipScore<KitchenTip>> =
        inf.candidates.iter().map(|c| (c.tip.to_string(), c)).collect();
    let dropped = inf.candidates.iter().filter(|c| !passes(c)).count();
    for r in &inf.ranking {
        for mbr in &r.members {
            ensure(passes(by_tip[&mbr.to_string()]), || format!("{mbr} surfaced from a filtered candidate"))?;
        }
    }
    ensure(dropped > 0, || "no candidate was filtered; the end-to-end check is vacuous".into())?;
    Ok(format!("2000 random pools; real run filtered {dropped}/{} candidates, none surfaced", inf.candidates.len()))
}

fn disrupted_study(rollouts: usize) -> ExperimentConfig {
    ExperimentConfig {
        configuration: Configuration::Disrupted,
        conditions: None,
        population: LearningPopulation::new(
            HumanKind::Avoid(Worker::Server, Subtask::Cook),
            vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            1.0,
        )
        .unwrap(),
        rollouts,
        seed: 0,
    }
}

fn treatment_effect() -> Result<String, String> {
    let cfg = disrupted_study(500);
    let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let last = report.final_round();
    let row = |c: &str| report.get(last, c).ok_or_else(|| format!("no row for {c}"));
    let (control, algorithm, human) = (row("control")?, row("algorithm")?, row("human")?);
    ensure(algorithm.tip.as_deref() == Some("Server should cook twice"), || format!("{:?}", algorithm.tip))?;
    let gap = control.mean_ticks - algorithm.mean_ticks;
    let detail = format!(
        "round {last}: control {:.2} vs algorithm {:.2} ticks (gap {gap:.2}); fraction optimal algorithm {:.3}, human tip {:.3}",
        control.mean_ticks, algorithm.mean_ticks, algorithm.frac_optimal, human.frac_optimal
    );
    ensure(gap >= 0.5, || detail.clone())?;
    ensure(algorithm.frac_optimal > 0.0 && human.frac_optimal == 0.0, || detail.clone())?;
    Ok(detail)
}

/// Acts greedily on an exact Q-table.
struct TableGreedy<'a> {
    table: &'a QTable<KitchenState, JointAction>,
}

impl Policy<KitchenMdp> for TableGreedy<'_> {
    fn distribution(&self, m: &KitchenMdp, s: &KitchenState) -> Vec<(JointAction, f64)> {
        let rem = m.horizon() - s.tick;
        let acts = self.table.actions(s, rem).expect("state reachable from the start");
        let best = acts.iter().fold(&acts[0], |b, a| if a.1 > b.1 { a } else { b });
        vec![(best.0.clone(), 1.0)]
    }
}

fn q_model_quality() -> Result<String, String> {
    let mut lines = Vec::new();
    let small = [
        (vec![Worker::SousChef, Worker::Server], 1u8),
        (vec![Worker::SousChef, Worker::Server], 2),
        (Worker::ALL.to_vec(), 1),
        (Worker::ALL.to_vec(), 2),
    ];
    for (roster, orders) in small {
        let m = KitchenMdp::new(KitchenConfig {
            roster: roster.clone(),
            orders,
            skills: SkillMatrix::default(),
            horizon: 30,
        })
        .unwrap();
        let table = exact_q_dp(&m, 2_000_000).map_err(|e| e.to_string())?;
        let expert = TableGreedy { table: &table };
        let cfg = QFitConfig { rollouts: 200, ..QFitConfig::default() };
        let fitted = fit_q_model(&m, &expert, &[], &cfg).map_err(|e| e.to_string())?;

        // Held-out states from fresh behaviour rollouts, every legal action.
        let mut errs = Vec::new();
        let mut values = Vec::new();
        for i in 0..60u64 {
            let eps = [0.0, 0.3, 1.0][i as usize % 3];
            let behaviour = Mixture { first: &expert, second: UniformPolicy, weight: eps };
            let r = sample_rollout(&m, &behaviour, &mut ChaCha8Rng::seed_from_u64(derive_seed(99, &[i]))).unwrap();
            for st in &r.steps {
                let rem = m.horizon() - st.state.tick;
                for a in m.legal_actions(&st.state) {
                    let exact = table.q(&st.state, rem, &a).unwrap();
                    errs.push((fitted.q(&m, &st.state, &a, rem) - exact).abs());
                    values.push(exact);
                }
            }
        }
        let mae = errs.iter().sum::<f64>() / errs.len() as f64;
        let range = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        let rel = mae / range;
        let name = format!("{}w/{}o", roster.len(), orders);
        ensure(rel < 0.05, || format!("{name}: MAE {mae:.3} is {:.1}% of range {range}", rel * 100.0))?;
        lines.push(format!("{name} {:.1}%", rel * 100.0));
    }

    let mut worst: f64 = 0.0;
    let mut params = 0;
    let bandit = BanditMdp::new(vec![1.0, -2.0, 0.5]);
    worst = worst.max(gradient_check(&ChainMdp, 3, &mut params)?);
    worst = worst.max(gradient_check(&bandit, 5, &mut params)?);
    worst = worst.max(gradient_check(&LobbyMdp, 7, &mut params)?);
    Ok(format!(
        "forest MAE / value range: {}; policy gradient vs finite differences over {params} parameters, worst relative error {worst:.2e}",
        lines.join(", ")
    ))
}

fn gradient_check<M: Featurizer>(m: &M, seed: u64, params: &mut usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = NeuralPolicy { net: Mlp::new(m.state_dim() + m.action_dim(), 6, &mut rng), greedy: false };
    let (_, grad) = exact_objective(m, &policy);
    let p = policy.net.params();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let mut q = policy.clone();
        let mut pp = p.clone();
        pp[i] += h;
        q.net.set_params(&pp);
        let jp = exact_objective(m, &q).0;
        pp[i] -= 2.0 * h;
        q.net.set_params(&pp);
        let jm = exact_objective(m, &q).0;
        let fd = (jp - jm) / (2.0 * h);
        let scale = fd.abs().max(grad[i].abs());
        if scale < 1e-7 {
            continue;
        }
        let rel = (fd - grad[i]).abs() / scale;
        ensure(rel < 1e-3, || format!("parameter {i}: finite difference {fd}, analytic {}", grad[i]))?;
        worst = worst.max(rel);
    }
    *params += p.len();
    Ok(worst)
}

fn trace_round_trip() -> Result<String, String> {
    let mut cfg = disrupted_study(42);
    cfg.conditions = Some(vec![
        Condition::new("control", None),
        Condition::new("algorithm", Some(TipFixture::parse("server.cook=2"))),
        Condition::new("baseline", Some(TipFixture::parse("sous_chef.plate=2"))),
        Condition::new("human", Some(TipFixture::parse("Server should cook once"))),
    ]);
    cfg.seed = 17;
    let records = simulate(&cfg).map_err(|e| e.to_string())?;
    ensure(records.len() >= 1000, || format!("only {} traces", records.len()))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("traces.jsonl");
    write_jsonl(&path, &records).map_err(|e| e.to_string())?;

    let ingested = ingest(&path).map_err(|e| e.to_string())?;
    ensure(ingested.errors.is_empty(), || format!("{:?}", ingested.errors.first()))?;
    ensure(ingested.records == records, || "records changed on the way through disk".into())?;
    for r in &ingested.records {
        r.validate().map_err(|e| format!("{}: {e}", r.session_id))?;
        let replayed = r.replay().map_err(|e| e.to_string())?;
        ensure(replayed.len() as u32 == r.completion_ticks, || format!("{}: replay length", r.session_id))?;
    }

    let emit = |records: &[_], name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let report = compute_metrics(&cfg, records).map_err(|e| e.to_string())?;
        let out = dir.path().join(name);
        let files = emit_report(&report, &out).map_err(|e| e.to_string())?;
        files
            .into_iter()
            .map(|f| {
                let bytes = std::fs::read(&f).map_err(|e| e.to_string())?;
                Ok((f.file_name().unwrap().to_string_lossy().into_owned(), bytes))
            })
            .collect()
    };
    let before = emit(&records, "direct")?;
    let after = emit(&ingested.records, "replayed")?;
    ensure(before == after, || "metrics differ after the round trip".into())?;
    let fresh = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let again = emit_report(&fresh, &dir.path().join("fresh")).map_err(|e| e.to_string())?;
    for (f, (name, bytes)) in again.iter().zip(&before) {
        ensure(std::fs::read(f).unwrap() == *bytes, || format!("{name} differs on a fresh run"))?;
    }
    let size: usize = before.iter().map(|(_, b)| b.len()).sum();
    Ok(format!(
        "{} traces persisted, validated and replayed; {} report files ({size} bytes) identical",
        records.len(),
        before.len()
    ))
}
