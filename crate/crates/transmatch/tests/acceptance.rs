//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1 to 3 re-check the core contracts on random instances. The
//! remaining ones pre-train the default desk configuration (cached under the
//! target directory) and benchmark it on 100 paired episodes per setting.
//! Expect close to an hour on one CPU core.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use transmatch::bench::{
    base_setting, distractor_settings, run_benchmark, shot_settings, unlabeled_settings, BenchOptions,
};
use transmatch::config::RunConfig;
use transmatch::lab::{ensure_checkpoint, Lab};
use transmatch::records::{accuracies, ResultRecord, Setting, RECORDS_FILE};
use transmatch_core::data::{sample_episode, EpisodeSpec};
use transmatch_core::eval::evaluate_episode;
use transmatch_core::imprint::{imprint_from_episode, imprint_weights, ImprintConfig, ImprintMode, SupportEmbeddings};
use transmatch_core::method::Method;
use transmatch_core::mixmatch::{
    build_mixmatch_batch, loss_l1, loss_l2, mixmatch_loss_and_grad, mixup, sharpen, soft_cross_entropy, squared_error,
    MixMatchBatch, Targeted,
};
use transmatch_core::model::{
    cosine_scores, ema_update, Classifier, ConvNet, ConvNetConfig, CosineHead, EmaShadow, FinetuneScope, Param,
    ParamSet, Parameterized,
};
use transmatch_core::rng::{derive_seed, seeded};
use transmatch_core::stats::{paired_difference, paired_wins, summarize, Summary};
use transmatch_core::{Image, ImageShape, ProbVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report(results: &mut Vec<bool>, id: &str, name: &str, o: Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} {id:<3} {name:<22} {}", o.detail);
    results.push(o.pass);
}

fn pts(s: &Summary) -> String {
    format!("{:+.2} ± {:.2} pts", 100.0 * s.mean, 100.0 * s.ci95)
}

// ---- criterion 1: property suites -----------------------------------------

fn random_prob(rng: &mut impl Rng, n: usize) -> ProbVector {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ProbVector::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Returns the list of violated properties; empty means all hold.
fn property_suite() -> Vec<String> {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let mut rng = seeded(11);
    let scalar = |v: f64| Image::filled(ImageShape::new(1, 1, 1), v);

    for _ in 0..2000 {
        let n = rng.random_range(2..=8);
        let p = random_prob(&mut rng, n);
        let t = rng.random_range(0.05..0.99);
        let s = sharpen(&p, t).unwrap();
        check(
            (s.entries().iter().sum::<f64>() - 1.0).abs() < 1e-6,
            "sharpen sums to one",
        );
        check(s.argmax() == p.argmax(), "sharpen keeps the argmax");
        check(
            entropy(s.entries()) <= entropy(p.entries()) + 1e-12,
            "sharpen lowers entropy",
        );

        let shape = ImageShape::new(1, 2, 2);
        let a: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let lambda: f64 = rng.random();
        let (pa, pb) = (random_prob(&mut rng, 3), random_prob(&mut rng, 3));
        let m = mixup(
            (&Image::new(shape, a.clone()).unwrap(), &pa),
            (&Image::new(shape, b.clone()).unwrap(), &pb),
            lambda,
        )
        .unwrap();
        let w = lambda.max(1.0 - lambda);
        check(w >= 0.5, "mixup weight at least one half");
        for ((x, y), z) in a.iter().zip(&b).zip(m.image.data()) {
            check(
                (z - (w * x + (1.0 - w) * y)).abs() < 1e-12,
                "mixup is the convex combination",
            );
        }
    }
    let (hot0, hot1) = (ProbVector::one_hot(2, 0), ProbVector::one_hot(2, 1));
    let end = mixup((&scalar(0.7), &hot0), (&scalar(0.1), &hot1), 1.0).unwrap();
    check(
        end.image == scalar(0.7) && end.target == hot0,
        "mixup identity endpoint",
    );

    for _ in 0..500 {
        let (n_l, n_u) = (rng.random_range(1..6), rng.random_range(0..6));
        let labeled: Vec<Targeted> = (0..n_l)
            .map(|i| (scalar(i as f64), ProbVector::one_hot(2, i % 2)))
            .collect();
        let unlabeled: Vec<Targeted> = (0..n_u)
            .map(|i| (scalar(10.0 + i as f64), ProbVector::uniform(2)))
            .collect();
        let batch = build_mixmatch_batch(&labeled, &unlabeled, 0.75, &mut rng).unwrap();
        let mut sorted = batch.partners.clone();
        sorted.sort_unstable();
        check(
            sorted == (0..n_l + n_u).collect::<Vec<_>>(),
            "partners form a permutation",
        );
        check(
            batch.labeled.len() == n_l && batch.unlabeled.len() == n_u,
            "batch sizes",
        );
    }

    for _ in 0..500 {
        let dim = 5;
        let support: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| {
                (0..rng.random_range(1..4))
                    .map(|_| (0..dim).map(|_| rng.random_range(0.05..1.0)).collect())
                    .collect()
            })
            .collect();
        let head = imprint_weights(
            &SupportEmbeddings::new(support.clone()).unwrap(),
            ImprintMode::NormalizedMean,
            10.0,
        )
        .unwrap();
        for r in head.rows() {
            check(
                (r.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-9,
                "imprinted rows are unit norm",
            );
        }
        let mut varied = support.clone();
        for class in &mut varied {
            class.reverse();
            let copies = class.clone();
            class.extend(copies);
        }
        let other = imprint_weights(
            &SupportEmbeddings::new(varied).unwrap(),
            ImprintMode::NormalizedMean,
            10.0,
        )
        .unwrap();
        let same = head
            .rows()
            .flatten()
            .zip(other.rows().flatten())
            .all(|(x, y)| (x - y).abs() < 1e-9);
        check(same, "imprinting ignores order and duplicates");
    }
    let degenerate =
        SupportEmbeddings::new(vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5], vec![-0.5, -0.5]]]).unwrap();
    check(
        imprint_weights(&degenerate, ImprintMode::NormalizedMean, 10.0).is_err(),
        "degenerate class is an error",
    );

    let half = ProbVector::uniform(2);
    check(
        (soft_cross_entropy(&[&hot0], std::slice::from_ref(&half)) - 2f64.ln()).abs() < 1e-4,
        "cross-entropy example",
    );
    check(
        (squared_error(&[&hot0], &[half], 2) - 0.25).abs() < 1e-4,
        "squared error example",
    );
    let s = sharpen(&ProbVector::new(vec![0.7, 0.3]).unwrap(), 0.5).unwrap();
    check((s.entries()[0] - 0.8448).abs() < 1e-4, "sharpen example");

    let one = |v: f64| ParamSet::new(vec![Param::new("v", vec![1], vec![v]).unwrap()]);
    for (decay, want) in [(1.0, 1.0), (0.0, 2.0), (0.9, 1.1)] {
        let mut shadow = EmaShadow::new(&one(1.0), decay).unwrap();
        ema_update(&mut shadow, &one(2.0)).unwrap();
        check(
            (shadow.model().get(0).data[0] - want).abs() < 1e-12,
            "EMA update example",
        );
    }
    let ci = summarize(&[0.0, 1.0]).unwrap();
    check(
        (ci.ci95 - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-12,
        "interval arithmetic",
    );
    failures.sort();
    failures.dedup();
    failures
}

// ---- criterion 2: gradient check ------------------------------------------

type TinyModel = Classifier<ConvNet, CosineHead>;

fn gradient_instance(seed: u64) -> (TinyModel, MixMatchBatch) {
    let mut rng = seeded(seed);
    let way = rng.random_range(2..=3);
    let dim = rng.random_range(4..=8);
    let shape = ImageShape::new(1, 4, 4);
    let net = ConvNet::new(
        ConvNetConfig {
            input: shape,
            channels: vec![3, 3],
            embedding_dim: dim,
        },
        seed,
    )
    .unwrap();
    let head = CosineHead::random(way, dim, rng.random_range(2.0..10.0), seed + 1).unwrap();
    let image = |rng: &mut transmatch_core::rng::Rng| {
        Image::new(shape, (0..shape.len()).map(|_| rng.random()).collect()).unwrap()
    };
    let labeled: Vec<Targeted> = (0..2)
        .map(|_| (image(&mut rng), ProbVector::one_hot(way, rng.random_range(0..way))))
        .collect();
    let unlabeled: Vec<Targeted> = (0..2).map(|_| (image(&mut rng), random_prob(&mut rng, way))).collect();
    let batch = build_mixmatch_batch(&labeled, &unlabeled, 0.75, &mut rng).unwrap();
    (Classifier::new(net, head), batch)
}

fn gradient_relative_error(seed: u64) -> f64 {
    const STEP: f64 = 1e-5;
    const GAMMA: f64 = 5.0;
    let (model, batch) = gradient_instance(seed);
    let objective =
        |m: &TinyModel| loss_l1(&batch.labeled, m).unwrap() + GAMMA * loss_l2(&batch.unlabeled, m, m.way()).unwrap();
    let analytic: Vec<f64> = mixmatch_loss_and_grad(&model, &batch, GAMMA, &model.mask(FinetuneScope::All))
        .unwrap()
        .grads
        .iter()
        .flat_map(|s| s.flatten())
        .collect();
    let mut numeric = Vec::new();
    for s in 0..model.param_sets().len() {
        for k in 0..model.param_sets()[s].num_values() {
            let mut plus = model.clone();
            *plus.param_sets_mut()[s].values_mut().nth(k).unwrap() += STEP;
            let mut minus = model.clone();
            *minus.param_sets_mut()[s].values_mut().nth(k).unwrap() -= STEP;
            numeric.push((objective(&plus) - objective(&minus)) / (2.0 * STEP));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12)
}

// ---- criterion 3: nearest-support oracle ----------------------------------

fn nearest_support_agreements(instances: usize) -> usize {
    let mut rng = seeded(2024);
    let mut agree = 0;
    for _ in 0..instances {
        let dim = rng.random_range(2..=8);
        let mut draw = || -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let shots: Vec<Vec<f64>> = (0..3).map(|_| draw()).collect();
        let query = draw();
        let head = imprint_weights(
            &SupportEmbeddings::new(shots.iter().map(|s| vec![s.clone()]).collect()).unwrap(),
            ImprintMode::NormalizedMean,
            1.0,
        )
        .unwrap();
        let scores = cosine_scores(&head, &query).unwrap();
        let q = unit(&query);
        let sims: Vec<f64> = shots
            .iter()
            .map(|s| unit(s).iter().zip(&q).map(|(a, b)| a * b).sum())
            .collect();
        let argmax = |v: &[f64]| (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best });
        if argmax(&scores) == argmax(&sims) {
            agree += 1;
        }
    }
    agree
}

// ---- desk-scale benchmarks ------------------------------------------------

struct Desk {
    lab: Lab,
    root: PathBuf,
    options: BenchOptions,
}

impl Desk {
    fn open() -> Desk {
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let config = RunConfig {
            output_dir: root.clone(),
            ..RunConfig::default()
        };
        let started = Instant::now();
        let (_, status) = ensure_checkpoint(&config, false).expect("pre-training failed");
        eprintln!("checkpoint {status:?} in {:.0?}", started.elapsed());
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        Desk {
            lab: Lab::open(config).expect("cannot open the desk lab"),
            root,
            options: BenchOptions {
                workers,
                progress: false,
            },
        }
    }

    fn run(&self, name: &str, methods: &[Method], settings: &[Setting]) -> (Vec<ResultRecord>, Duration) {
        self.run_with(&self.lab, name, methods, settings, &self.options)
    }

    fn run_with(
        &self,
        lab: &Lab,
        name: &str,
        methods: &[Method],
        settings: &[Setting],
        options: &BenchOptions,
    ) -> (Vec<ResultRecord>, Duration) {
        let started = Instant::now();
        let dir = self.root.join("results").join(name);
        fs::create_dir_all(&dir).unwrap();
        let run = run_benchmark(lab, methods, settings, options, Some(&dir)).expect("benchmark failed");
        let elapsed = started.elapsed();
        eprintln!("{name}: {} records in {:.0?}", run.records.len(), elapsed);
        (run.records, elapsed)
    }
}

fn acc(records: &[ResultRecord], method: Method, setting: &Setting) -> Vec<f64> {
    let v = accuracies(records, method, setting);
    assert!(!v.is_empty(), "no records for {} at {}", method.name(), setting.label());
    v
}

/// Episode seeds of one method/setting, to confirm pairing across runs.
fn seeds(records: &[ResultRecord], method: Method, setting: &Setting) -> Vec<u64> {
    records
        .iter()
        .filter(|r| r.method == method && &r.setting == setting)
        .map(|r| r.episode_seed)
        .collect()
}

fn imprint_augmentation_wins(lab: &Lab) -> (usize, usize) {
    let eval = &lab.config.eval;
    let spec = EpisodeSpec {
        unlabeled: 0,
        distractor_classes: 0,
        ..eval.episode_spec()
    };
    let plain = ImprintConfig {
        augmentation_copies: 0,
        ..lab.config.imprint
    };
    let augmented = ImprintConfig {
        augmentation_copies: 10,
        ..lab.config.imprint
    };
    let mut at_least = 0;
    for i in 0..eval.n_episodes {
        let ep = sample_episode(
            &lab.dataset,
            &lab.split.novel_classes,
            &spec,
            derive_seed(eval.seed, i as u64),
        )
        .unwrap();
        let score = |config: &ImprintConfig| {
            let head = imprint_from_episode(&lab.extractor, &ep, config).unwrap();
            evaluate_episode(&Classifier::new(lab.extractor.clone(), head), &ep)
                .unwrap()
                .accuracy
        };
        if score(&augmented) >= score(&plain) {
            at_least += 1;
        }
    }
    (at_least, eval.n_episodes)
}

fn main() {
    let mut results = Vec::new();

    let started = Instant::now();
    let failures = property_suite();
    let elapsed = started.elapsed();
    report(
        &mut results,
        "1",
        "property suites",
        outcome(
            failures.is_empty() && elapsed < Duration::from_secs(60),
            if failures.is_empty() {
                format!("all properties hold ({elapsed:.1?})")
            } else {
                format!("violated: {}", failures.join("; "))
            },
        ),
    );

    let started = Instant::now();
    let worst = (0..20).map(gradient_relative_error).fold(0.0, f64::max);
    let elapsed = started.elapsed();
    report(
        &mut results,
        "2",
        "gradient check",
        outcome(
            worst < 1e-4 && elapsed < Duration::from_secs(60),
            format!("max relative error {worst:.2e} over 20 instances ({elapsed:.1?})"),
        ),
    );

    let agree = nearest_support_agreements(200);
    report(
        &mut results,
        "3",
        "nearest-support oracle",
        outcome(agree == 200, format!("{agree}/200 instances agree")),
    );

    let desk = Desk::open();
    let base = base_setting(&desk.lab);
    let eval = desk.lab.config.eval.clone();

    // Trend A: TransMatch against imprinting at U = 30.
    let (main, main_time) = desk.run("base", &[Method::Imprinting, Method::Transmatch], &[base]);
    let tm = acc(&main, Method::Transmatch, &base);
    let gap_a = paired_difference(&tm, &acc(&main, Method::Imprinting, &base)).unwrap();
    report(
        &mut results,
        "4",
        "trend A (vs imprinting)",
        outcome(
            gap_a.excludes_zero_above() && main_time < Duration::from_secs(30 * 60),
            format!(
                "TransMatch - Imprinting = {} at U={}, {} episodes ({main_time:.0?})",
                pts(&gap_a),
                base.unlabeled,
                tm.len()
            ),
        ),
    );

    // Trend B: the advantage over MixMatch from a random head shrinks with shots.
    let shots = shot_settings(base, &[1, 3, 5]);
    let (mm, _) = desk.run("shot-mixmatch", &[Method::Mixmatch], &shots);
    let (tm_shots, _) = desk.run("shot-transmatch", &[Method::Transmatch], &shots[1..]);
    let gaps: Vec<Summary> = shots
        .iter()
        .map(|s| {
            let t = if s.shot == base.shot {
                tm.clone()
            } else {
                acc(&tm_shots, Method::Transmatch, s)
            };
            paired_difference(&t, &acc(&mm, Method::Mixmatch, s)).unwrap()
        })
        .collect();
    let monotone = gaps.windows(2).all(|w| w[1].lower() <= w[0].upper());
    // Different settings: combine the two intervals as independent estimates.
    let drop = gaps[0].mean - gaps[2].mean;
    let drop_ci = (gaps[0].ci95.powi(2) + gaps[2].ci95.powi(2)).sqrt();
    report(
        &mut results,
        "5",
        "trend B (vs MixMatch)",
        outcome(
            monotone && drop - drop_ci > 0.0,
            format!(
                "gap 1/3/5-shot = {} | {} | {}; 1-shot minus 5-shot {:+.2} ± {:.2} pts",
                pts(&gaps[0]),
                pts(&gaps[1]),
                pts(&gaps[2]),
                100.0 * drop,
                100.0 * drop_ci
            ),
        ),
    );

    // Trend C: more unlabeled images help.
    let pools = unlabeled_settings(base, &eval.unlabeled_sweep);
    let smaller: Vec<Setting> = pools
        .iter()
        .copied()
        .filter(|s| s.unlabeled != base.unlabeled)
        .collect();
    let (tm_pools, _) = desk.run("unlabeled-transmatch", &[Method::Transmatch], &smaller);
    let by_pool: Vec<Vec<f64>> = pools
        .iter()
        .map(|s| {
            if s.unlabeled == base.unlabeled {
                tm.clone()
            } else {
                acc(&tm_pools, Method::Transmatch, s)
            }
        })
        .collect();
    let steps: Vec<Summary> = by_pool
        .windows(2)
        .map(|w| paired_difference(&w[1], &w[0]).unwrap())
        .collect();
    let overall = paired_difference(by_pool.last().unwrap(), &by_pool[0]).unwrap();
    let means: Vec<String> = pools
        .iter()
        .zip(&by_pool)
        .map(|(s, a)| format!("U{} {:.2}", s.unlabeled, 100.0 * summarize(a).unwrap().mean))
        .collect();
    report(
        &mut results,
        "6",
        "trend C (unlabeled sweep)",
        outcome(
            steps.iter().all(|d| d.upper() >= 0.0) && overall.excludes_zero_above(),
            format!(
                "{}; U{} - U{} = {}",
                means.join(" / "),
                pools.last().unwrap().unlabeled,
                pools[0].unlabeled,
                pts(&overall)
            ),
        ),
    );

    // Trend D: MixMatch fine-tuning beats pseudo-labelling from the same head.
    let (pl, _) = desk.run("pseudo-label", &[Method::PseudoLabel], &[base]);
    assert_eq!(
        seeds(&pl, Method::PseudoLabel, &base),
        seeds(&main, Method::Transmatch, &base)
    );
    let gap_d = paired_difference(&tm, &acc(&pl, Method::PseudoLabel, &base)).unwrap();
    report(
        &mut results,
        "7",
        "trend D (vs pseudo-label)",
        outcome(
            gap_d.excludes_zero_above(),
            format!("TransMatch - Pseudo-Label = {}", pts(&gap_d)),
        ),
    );

    // Trend E: distractor classes in the unlabeled pool.
    let noisy = distractor_settings(base, &eval.distractor_sweep);
    let (dis, _) = desk.run("distractors", &[Method::Imprinting, Method::Transmatch], &noisy);
    let mut all_significant = true;
    let mut parts = Vec::new();
    for s in &noisy {
        let w = paired_wins(&acc(&dis, Method::Transmatch, s), &acc(&dis, Method::Imprinting, s)).unwrap();
        all_significant &= w.p_value < 0.05;
        parts.push(format!(
            "D{} {}-{}-{} p={:.1e}",
            s.distractors, w.wins, w.losses, w.ties, w.p_value
        ));
    }
    report(
        &mut results,
        "8",
        "trend E (distractors)",
        outcome(all_significant, format!("wins-losses-ties {}", parts.join(", "))),
    );

    // Augmented imprinting (10 copies) against plain imprinting.
    let (wins, n) = imprint_augmentation_wins(&desk.lab);
    report(
        &mut results,
        "8b",
        "imprint augmentation",
        outcome(100 * wins >= 55 * n, format!("A=10 >= A=0 on {wins}/{n} episodes")),
    );

    // Reproducibility: the same benchmark twice, with different worker counts.
    let mut small = desk.lab.clone();
    small.config.eval.n_episodes = 4;
    let methods = [Method::Imprinting, Method::PseudoLabel, Method::Transmatch];
    let single = BenchOptions {
        workers: 1,
        progress: false,
    };
    let several = BenchOptions {
        workers: 3,
        progress: false,
    };
    let (first, _) = desk.run_with(&small, "rerun-1", &methods, &[base], &single);
    let (second, _) = desk.run_with(&small, "rerun-2", &methods, &[base], &several);
    let bytes = |name: &str| fs::read(desk.root.join("results").join(name).join(RECORDS_FILE)).unwrap();
    let identical = first == second && bytes("rerun-1") == bytes("rerun-2");
    report(
        &mut results,
        "9",
        "reproducibility",
        outcome(
            identical,
            format!(
                "{} records, files {}",
                first.len(),
                if identical { "identical" } else { "differ" }
            ),
        ),
    );

    let failed = results.iter().filter(|p| !**p).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    println!("records under {}", display(&desk.root.join("results")));
    if failed > 0 {
        std::process::exit(1);
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
