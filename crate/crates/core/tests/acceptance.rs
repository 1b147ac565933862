//! Runs every acceptance criterion in order and prints one PASS/FAIL line
//! for each. The full-scale pretraining and fine-tuning criteria use the
//! default configuration and take tens of minutes on one core.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostream_core::clip::ClipSampleSpec;
use twostream_core::config::ExperimentConfig;
use twostream_core::eval::{ComparisonTable, EvalReport};
use twostream_core::experiment::{cmd_finetune, cmd_gen_data, cmd_pretrain, cmd_reproduce};
use twostream_core::frame::Frame;
use twostream_core::motion::{apply_permutation, stack_of_differences, Permutation};
use twostream_core::nn::model::argmax;
use twostream_core::nn::{Batch, HeadKind, Optimizer, TowerSpec, TwoStreamConfig, TwoStreamNet};
use twostream_core::pretext::{class_histogram, generate_epoch, label_oracle, ClipStore, TupleGenSpec};
use twostream_core::report::moving_average;
use twostream_core::synthetic::{generate_corpus, SourceVideo, SyntheticCorpusSpec};
use twostream_core::train::{InitMode, TrainSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed.as_secs_f64() <= limit_s as f64, format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
}

fn random_frame(rng: &mut impl Rng, h: usize, w: usize) -> Frame {
    Frame::from_vec(h, w, 3, (0..h * w * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn default_corpus() -> Vec<SourceVideo> {
    generate_corpus(&SyntheticCorpusSpec::default()).unwrap().into_iter().map(Into::into).collect()
}

/// Stack of differences against a scalar per-pixel oracle.
fn ac1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gray = |f: &Frame, r, c| 0.299 * f.get(r, c, 0) as f64 + 0.587 * f.get(r, c, 1) as f64 + 0.114 * f.get(r, c, 2) as f64;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let frames: Vec<Frame> = (0..6).map(|_| random_frame(&mut rng, 32, 32)).collect();
        let sod = stack_of_differences(&frames).map_err(|e| e.to_string())?;
        for ch in 0..5 {
            for r in 0..32 {
                for c in 0..32 {
                    let want = gray(&frames[ch + 1], r, c) - gray(&frames[ch], r, c);
                    worst = worst.max((sod.get(r, c, ch) as f64 - want).abs());
                }
            }
        }
        let rev = stack_of_differences(&apply_permutation(&frames, &Permutation::REVERSAL).unwrap()).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                for ch in 0..5 {
                    let s = rev.get(r, c, ch) + sod.get(r, c, 4 - ch);
                    check(s.abs() <= 1e-6, format!("reversal not antisymmetric: {s}"))?;
                }
            }
        }
    }
    check(worst <= 1e-6, format!("max oracle error {worst}"))?;
    let constant = vec![Frame::filled(32, 32, 3, 0.6); 6];
    check(stack_of_differences(&constant).unwrap().is_zero(), "constant input gave nonzero stack")?;
    within(t.elapsed(), 5)?;
    Ok(format!("max error {worst:.2e}, {:.2}s", t.elapsed().as_secs_f64()))
}

/// Tuple labels, balance and permutation pools.
fn ac2() -> Outcome {
    let t = Instant::now();
    let videos = default_corpus();
    let store = ClipStore::build(&videos, &ClipSampleSpec::default()).map_err(|e| e.to_string())?;
    let spec = TupleGenSpec::default();
    let many = generate_epoch(&store, 10_000, &TupleGenSpec { seed: 5, ..spec.clone() }, 1).map_err(|e| e.to_string())?;
    let disagree = many.iter().filter(|t| label_oracle(t, &spec) != t.label).count();
    check(disagree == 0, format!("{disagree} of 10000 labels disagree with the oracle"))?;
    let epoch = generate_epoch(&store, 4000, &spec, 1).map_err(|e| e.to_string())?;
    let counts = class_histogram(&epoch);
    check(counts == [1000; 4], format!("class counts {counts:?}"))?;
    let bad = many
        .iter()
        .chain(&epoch)
        .filter(|t| !t.label.order_valid())
        .filter(|t| t.provenance.permutation.is_identity() || t.provenance.permutation.is_reversal())
        .count();
    check(bad == 0, format!("{bad} invalid-order tuples use identity or reversal"))?;
    within(t.elapsed(), 60)?;
    Ok(format!("10000 labels agree, counts {counts:?}, {:.1}s", t.elapsed().as_secs_f64()))
}

/// Frozen spatial tower stays put over 100 optimizer steps.
fn ac3() -> Outcome {
    let videos: Vec<SourceVideo> = default_corpus().into_iter().take(40).collect();
    let store = ClipStore::build(&videos, &ClipSampleSpec::default()).unwrap();
    let tuples = generate_epoch(&store, 256, &TupleGenSpec::default(), 1).unwrap();
    let mut model = TwoStreamNet::<f32>::new(TwoStreamConfig::default(), 0).unwrap();
    model.freeze_spatial();
    let spatial = |m: &TwoStreamNet<f32>| -> Vec<Vec<f32>> {
        m.params().entries().iter().filter(|e| e.name.starts_with("spatial.")).map(|e| e.value.clone()).collect()
    };
    let before = spatial(&model);
    let motion_before = model.params().value(model.params().find("motion.conv1.weight").unwrap()).to_vec();
    let spec = TrainSpec::default();
    let mut opt = Optimizer::new(spec.optimizer, spec.learning_rate, model.params());
    let mask = model.trainable_mask(HeadKind::Pretext);
    for step in 0..100 {
        let chunk = &tuples[(step * 64) % 256..(step * 64) % 256 + 64];
        let batch = Batch::<f32>::assemble(chunk.iter().map(|t| (&t.rgb, &t.sod, t.label.index())));
        let out = model.loss_and_grads(HeadKind::Pretext, &batch, None).unwrap();
        opt.step(model.params_mut(), &out.grads, &mask);
    }
    let after = spatial(&model);
    let delta: f64 = before.iter().flatten().zip(after.iter().flatten()).map(|(a, b)| (a - b).abs() as f64).sum();
    check(delta == 0.0, format!("spatial tower moved by {delta}"))?;
    let motion_after = model.params().value(model.params().find("motion.conv1.weight").unwrap());
    check(motion_after != motion_before.as_slice(), "motion tower did not train")?;
    Ok("spatial delta 0 after 100 steps".into())
}

/// Central differences in f64 on the micro network, per trainable group.
fn ac4() -> Outcome {
    let t = Instant::now();
    let config = TwoStreamConfig { tower: TowerSpec::micro(), ..Default::default() };
    let mut net = TwoStreamNet::<f64>::new(config, 21).unwrap();
    net.unfreeze_spatial();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let items: Vec<(Frame, twostream_core::motion::StackOfDifferences)> = (0..4)
        .map(|_| {
            let frames: Vec<Frame> = (0..6).map(|_| random_frame(&mut rng, 8, 8)).collect();
            (frames[3].clone(), stack_of_differences(&frames).unwrap())
        })
        .collect();
    let batch = Batch::<f64>::assemble(items.iter().enumerate().map(|(i, (r, s))| (r, s, i % 4)));
    let analytic = net.loss_and_grads(HeadKind::Pretext, &batch, None).unwrap().grads;
    let mask = net.trainable_mask(HeadKind::Pretext);
    let eps = 1e-4;
    let mut sums: HashMap<String, (f64, f64, f64)> = HashMap::new();
    let names: Vec<String> = net.params().entries().iter().map(|e| e.name.clone()).collect();
    for (pi, name) in names.iter().enumerate() {
        if !mask[pi] {
            continue;
        }
        let id = net.params().find(name).unwrap();
        let group = TwoStreamNet::<f64>::group_of(name).to_string();
        for j in 0..net.params().value(id).len() {
            let orig = net.params().value(id)[j];
            net.params_mut().value_mut(id)[j] = orig + eps;
            let up = net.loss_and_grads(HeadKind::Pretext, &batch, None).unwrap().loss;
            net.params_mut().value_mut(id)[j] = orig - eps;
            let down = net.loss_and_grads(HeadKind::Pretext, &batch, None).unwrap().loss;
            net.params_mut().value_mut(id)[j] = orig;
            let num = (up - down) / (2.0 * eps);
            let an = analytic.get(id)[j];
            let s = sums.entry(group.clone()).or_default();
            s.0 += (num - an).powi(2);
            s.1 += num * num;
            s.2 += an * an;
        }
    }
    let mut groups: Vec<_> = sums.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    check(groups.len() == 3, format!("expected 3 trainable groups, got {}", groups.len()))?;
    let mut parts = Vec::new();
    for (g, (d, n, a)) in &groups {
        let rel = d.sqrt() / (n.sqrt() + a.sqrt()).max(1e-12);
        check(rel <= 1e-3, format!("{g}: relative error {rel:.3e}"))?;
        parts.push(format!("{g} {rel:.1e}"));
    }
    within(t.elapsed(), 120)?;
    Ok(format!("{}, {:.1}s", parts.join(", "), t.elapsed().as_secs_f64()))
}

struct FullRun {
    config: ExperimentConfig,
    _dir: tempfile::TempDir,
}

fn full_config() -> FullRun {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.data.dir = dir.path().join("data");
    config.output_dir = dir.path().join("runs");
    FullRun { config, _dir: dir }
}

/// Default pretraining run.
fn ac5(run: &FullRun) -> Outcome {
    cmd_gen_data(&run.config).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let summary = cmd_pretrain(&run.config).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let metrics = twostream_core::train::RunMetrics::read_csv(&run.config.run_dir().join("metrics.csv")).map_err(|e| e.to_string())?;
    let losses = metrics.train_losses();
    check(losses.len() == 10_000, format!("{} training iterations logged", losses.len()))?;
    let avg = moving_average(&losses, 500);
    let ratio = avg[losses.len() - 1] / avg[499];
    let acc = summary.heldout_report.overall_accuracy;
    let init = summary.initial_loss;
    let detail = format!(
        "heldout {acc:.4}, initial loss {init:.4}, smoothed end/500 ratio {ratio:.3}, {:.0}s",
        elapsed.as_secs_f64()
    );
    check(acc >= 0.70, format!("held-out accuracy below 0.70: {detail}"))?;
    check((init - 4f64.ln()).abs() <= 0.15, format!("initial loss off ln 4: {detail}"))?;
    check(ratio < 0.5, format!("loss did not halve: {detail}"))?;
    within(elapsed, 15 * 60).map_err(|e| format!("{e}: {detail}"))?;
    Ok(detail)
}

/// Five seeds, both arms, against the pretraining from AC-5.
fn ac6(run: &FullRun) -> Outcome {
    let t = Instant::now();
    let mut table = ComparisonTable::new();
    for &seed in &run.config.seeds {
        let random = cmd_finetune(&run.config, InitMode::Random, seed).map_err(|e| e.to_string())?;
        let selfsup = cmd_finetune(&run.config, InitMode::SelfSupervised, seed).map_err(|e| e.to_string())?;
        check(random.report.class_support.iter().all(|&s| s > 0), "test set misses a class")?;
        table.push(format!("seed {seed}"), &random.report, &selfsup.report).map_err(|e| e.to_string())?;
    }
    let elapsed = t.elapsed();
    print!("{}", table.to_text());
    let text = table.to_text();
    check(text.contains("Sup (Rand Init.)") && text.contains("Self-Sup"), "table lacks its column labels")?;
    let mean = table.mean_delta_overall();
    let wins = table.wins_or_ties();
    let detail = format!("mean delta {mean:+.2} points, {wins}/5 wins or ties, {:.0}s", elapsed.as_secs_f64());
    check(table.rows.len() == 5, "expected 5 rows")?;
    check(mean >= 0.0, format!("mean delta negative: {detail}"))?;
    check(wins >= 3, format!("too few wins: {detail}"))?;
    within(elapsed, 30 * 60).map_err(|e| format!("{e}: {detail}"))?;
    Ok(detail)
}

/// Reruns are byte-identical and tuple generation ignores worker count.
fn ac7() -> Outcome {
    let csvs = || -> Result<Vec<Vec<u8>>, String> {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig {
            name: "repro".into(),
            ..Default::default()
        };
        config.data.dir = dir.path().join("data");
        config.output_dir = dir.path().join("runs");
        config.corpus.num_videos = 40;
        config.corpus.frames_per_video = 80;
        config.corpus.frame_size = (16, 16);
        config.clips.clips_per_video = 3;
        config.tuples.input_size = Some((8, 8));
        config.model.tower = TowerSpec::micro();
        config.model.head_hidden = 16;
        config.data.train_tuples = 96;
        config.data.heldout_tuples = 32;
        config.warmstart.iterations = 5;
        config.warmstart.batch_size = 8;
        config.pretrain = TrainSpec { iterations: 20, batch_size: 16, eval_every: 10, ..Default::default() };
        config.finetune.clips_per_class = 4;
        config.finetune.test_clips_per_video = 2;
        config.finetune.train = TrainSpec { iterations: 10, batch_size: 8, eval_every: 5, ..Default::default() };
        config.seeds = vec![1, 2];
        cmd_reproduce(&config).map_err(|e| e.to_string())?;
        let run = config.run_dir();
        let mut out = vec![std::fs::read(run.join("metrics.csv")).unwrap(), std::fs::read(run.join("report/comparison.csv")).unwrap()];
        for seed in [1, 2] {
            for arm in ["random", "self_supervised"] {
                out.push(std::fs::read(run.join(format!("finetune/{arm}-seed{seed}/metrics.csv"))).unwrap());
            }
        }
        Ok(out)
    };
    let a = csvs()?;
    let b = csvs()?;
    check(a == b, "metrics CSVs differ between identical runs")?;

    let videos: Vec<SourceVideo> = default_corpus().into_iter().take(40).collect();
    let store = ClipStore::build(&videos, &ClipSampleSpec::default()).unwrap();
    let spec = TupleGenSpec { seed: 3, ..Default::default() };
    let one = generate_epoch(&store, 400, &spec, 1).unwrap();
    let four = generate_epoch(&store, 400, &spec, 4).unwrap();
    check(one == four, "tuples depend on worker count")?;
    Ok(format!("{} CSV files identical, tuples identical for 1 and 4 workers", a.len()))
}

/// Evaluation identities on random predictions.
fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let k = rng.random_range(2..=8);
        let n = rng.random_range(1..=1000);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let r = EvalReport::from_predictions(&pred, &labels, k).map_err(|e| e.to_string())?;
        let correct = pred.iter().zip(&labels).filter(|(p, y)| p == y).count();
        check(r.confusion.iter().flatten().sum::<u64>() == n as u64, "confusion total")?;
        check((r.overall_accuracy - correct as f64 / n as f64).abs() < 1e-12, "overall accuracy")?;
        for c in 0..k {
            let support = labels.iter().filter(|&&y| y == c).count();
            let hit = pred.iter().zip(&labels).filter(|(p, y)| **y == c && **p == c).count();
            let want = (support > 0).then(|| hit as f64 / support as f64);
            check(r.per_class_accuracy[c] == want, format!("class {c} accuracy"))?;
        }
    }
    check(argmax(&[0.3f32, 0.5, 0.5, 0.1]) == 1, "ties must go to the lowest index")?;
    check(argmax(&[0.0f32; 8]) == 0, "all-equal row must pick index 0")?;
    Ok("500 random prediction sets".into())
}

fn report(id: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(detail) => println!("{id} PASS ({detail})"),
        Err(why) => println!("{id} FAIL ({why})"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let _ = env_logger::builder().is_test(true).try_init();
    let full = full_config();
    let mut all = true;
    all &= report("AC-1", &ac1());
    all &= report("AC-2", &ac2());
    all &= report("AC-3", &ac3());
    all &= report("AC-4", &ac4());
    let ac5 = ac5(&full);
    all &= report("AC-5", &ac5);
    let ac6 = if full.config.run_dir().join("checkpoints/pretext.ckpt").exists() {
        ac6(&full)
    } else {
        Err("no pretext checkpoint from AC-5".into())
    };
    all &= report("AC-6", &ac6);
    all &= report("AC-7", &ac7());
    all &= report("AC-8", &ac8());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
