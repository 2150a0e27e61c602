//! The stages behind the subcommands.
//!
//! A data directory holds one `<stem>.pose.psim` per sequence plus its
//! `<stem>.subject` sidecar; `simulate` adds `<stem>.deform.psim` and
//! `<stem>.pressure.psim`. Training writes checkpoints, per-network history
//! CSVs and the window split into a models directory. Synthesis writes
//! `<stem>.<model>.psim` pressure files holding the target frames of the
//! synthesized windows.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use pressim_core::datapipe::{
    align_timestamps, read_sequence, split, write_sequence, InputSelection, Normalization, Payload,
    SequenceFile, TargetKind, WindowView, WindowedDataset,
};
use pressim_core::deformsim::{deformation_pgm, pressure_pgm, simulate_sequence, PlaneModel};
use pressim_core::evalkit::{report, MetricReport};
use pressim_core::neuralnet::{
    build_model_for, load_checkpoint, predict_all, save_checkpoint, train, train_fused,
    Hyperparams, LossMode, NetError, Network, NetworkKind, Real, SampleSource, Tensor,
    TensorDataset, TrainHistory, WINDOW,
};
use pressim_core::posekit::{
    build_skeleton, generate_motion, MotionSpec, MotionTemplate, PoseSequence, SkeletonKind,
    SubjectProfile,
};
use pressim_core::{Grid, PressureFrame, GRID_CELLS};

use crate::config::{Config, SubjectEntry};
use crate::CliError;

pub const POSE_SUFFIX: &str = ".pose.psim";
pub const DEFORM_SUFFIX: &str = ".deform.psim";
pub const PRESSURE_SUFFIX: &str = ".pressure.psim";
pub const SUBJECT_SUFFIX: &str = ".subject";
pub const SPLIT_FILE: &str = "split.tsv";
/// Model names used for synthesized files and report rows.
pub const PRESSIM: &str = "pressim";
pub const BASELINE: &str = "baseline";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad_input(path: &Path, message: impl Into<String>) -> CliError {
    CliError::BadInput {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for a named use of the master seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label
    let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    });
    splitmix(seed ^ splitmix(h ^ splitmix(index)))
}

/// File name without `.pose.psim`, or without its last extension.
pub fn stem_of(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(s) = name.strip_suffix(POSE_SUFFIX) {
        return s.to_string();
    }
    match name.rsplit_once('.') {
        Some((s, _)) if !s.is_empty() => s.to_string(),
        _ => name,
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Sorted stems of the files in `dir` ending in `suffix`.
fn stems_with(dir: &Path, suffix: &str) -> Result<Vec<String>, CliError> {
    let mut stems: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(suffix))
                .map(str::to_string)
        })
        .filter(|s| !s.is_empty())
        .collect();
    stems.sort();
    Ok(stems)
}

// ---------------------------------------------------------------- gen

/// One synthetic recording.
#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub template: MotionTemplate,
    pub duration: f64,
    pub fps: f64,
    pub noise: f64,
    pub seed: u64,
    pub subject: SubjectEntry,
}

fn profile(s: &SubjectEntry) -> Result<SubjectProfile, CliError> {
    Ok(SubjectProfile::new(
        s.id.clone(),
        s.mass_kg,
        s.height_cm,
        s.gender.clone(),
    )?)
}

pub fn subject_sidecar(pose_path: &Path) -> PathBuf {
    parent_dir(pose_path).join(format!("{}{SUBJECT_SUFFIX}", stem_of(pose_path)))
}

fn write_subject(path: &Path, s: &SubjectEntry) -> Result<(), CliError> {
    let text = format!(
        "subject.id = {}\nsubject.mass_kg = {}\nsubject.height_cm = {}\nsubject.gender = {}\n",
        s.id, s.mass_kg, s.height_cm, s.gender
    );
    fs::write(path, text).map_err(io_err(path))
}

/// Subject recorded next to a pose file, if any.
pub fn read_subject(pose_path: &Path) -> Result<Option<SubjectEntry>, CliError> {
    let path = subject_sidecar(pose_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let cfg = Config::parse(&text).map_err(|e| bad_input(&path, e.to_string()))?;
    Ok(Some(cfg.subject))
}

/// Writes a COCO-17 pose file and its subject sidecar.
pub fn generate_file(req: &GenRequest, out: &Path) -> Result<usize, CliError> {
    let subject = profile(&req.subject)?;
    let spec = MotionSpec {
        template: req.template,
        duration: req.duration,
        fps: req.fps,
        noise_amplitude: req.noise,
        seed: req.seed,
    };
    let poses = generate_motion(&spec, &build_skeleton(SkeletonKind::Coco17), &subject)?;
    ensure_dir(&parent_dir(out))?;
    write_sequence(out, &SequenceFile::from_poses(&poses)?)?;
    write_subject(&subject_sidecar(out), &req.subject)?;
    Ok(poses.len())
}

/// Every configured subject performing every configured template.
pub fn generate_dataset(cfg: &Config, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if cfg.dataset_subjects.is_empty() || cfg.dataset_templates.is_empty() {
        return Err(CliError::Usage(
            "dataset mode needs dataset.subjects and dataset.templates (or pass --template)".into(),
        ));
    }
    let mut out = Vec::new();
    for (si, subject) in cfg.dataset_subjects.iter().enumerate() {
        for (ti, &template) in cfg.dataset_templates.iter().enumerate() {
            let path = dir.join(format!("{}_{template}{POSE_SUFFIX}", subject.id));
            let req = GenRequest {
                template,
                duration: cfg.dataset_duration,
                fps: cfg.motion_fps,
                noise: cfg.motion_noise,
                seed: derive_seed(cfg.seed, "gen", (si * 1000 + ti) as u64),
                subject: subject.clone(),
            };
            generate_file(&req, &path)?;
            out.push(path);
        }
    }
    Ok(out)
}

// ----------------------------------------------------------- simulate

fn nearest(ts: &[f64], t: f64) -> usize {
    let i = ts.partition_point(|&x| x < t);
    if i == 0 {
        0
    } else if i == ts.len() || t - ts[i - 1] <= ts[i] - t {
        i - 1
    } else {
        i
    }
}

/// Pose frames sampled by a sensor ticking at `fps` from the first pose
/// timestamp: the nearest frame to each tick, without repeats.
pub fn sensor_frames(ts: &[f64], fps: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let (Some(&t0), Some(&t1)) = (ts.first(), ts.last()) else {
        return out;
    };
    let mut k = 0u64;
    loop {
        let t = t0 + k as f64 / fps;
        if t > t1 + 1e-9 {
            break;
        }
        let i = nearest(ts, t);
        if out.last() != Some(&i) {
            out.push(i);
        }
        k += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub deform: PathBuf,
    pub pressure: PathBuf,
    pub frames: usize,
    /// Frames in which the body does not touch the mat.
    pub empty: usize,
}

/// Simulates the sensor-rate frames of one pose file into `out_dir`.
pub fn simulate_file(
    pose_path: &Path,
    out_dir: &Path,
    subject: &SubjectEntry,
    plane: &PlaneModel,
    pressure_fps: f64,
    pgm_dir: Option<&Path>,
) -> Result<SimOutput, CliError> {
    let file = read_sequence(pose_path)?;
    let poses = file.to_poses()?;
    let pick = sensor_frames(poses.timestamps(), pressure_fps);
    let sampled = PoseSequence::new(
        poses.skeleton().clone(),
        pick.iter().map(|&i| poses.frames()[i].clone()).collect(),
        pick.iter().map(|&i| poses.timestamps()[i]).collect(),
    )?;
    let sim = simulate_sequence(&sampled, &profile(subject)?, plane)?;
    let stem = stem_of(pose_path);
    ensure_dir(out_dir)?;
    let deform = out_dir.join(format!("{stem}{DEFORM_SUFFIX}"));
    let pressure = out_dir.join(format!("{stem}{PRESSURE_SUFFIX}"));
    write_sequence(
        &deform,
        &SequenceFile::new(
            sim.timestamps.clone(),
            Payload::Deform(sim.deformation.clone()),
        )?,
    )?;
    write_sequence(
        &pressure,
        &SequenceFile::new(
            sim.timestamps.clone(),
            Payload::Pressure(sim.pressure.clone()),
        )?,
    )?;
    if let Some(dir) = pgm_dir {
        ensure_dir(dir)?;
        for (i, (d, p)) in sim.deformation.iter().zip(&sim.pressure).enumerate() {
            let dp = dir.join(format!("{stem}_{i:05}.deform.pgm"));
            fs::write(&dp, deformation_pgm(d)).map_err(io_err(&dp))?;
            let pp = dir.join(format!("{stem}_{i:05}.pressure.pgm"));
            fs::write(&pp, pressure_pgm(p)).map_err(io_err(&pp))?;
        }
    }
    Ok(SimOutput {
        deform,
        pressure,
        frames: sim.timestamps.len(),
        empty: sim.empty_frames.len(),
    })
}

pub fn plane_of(cfg: &Config) -> Result<PlaneModel, CliError> {
    Ok(PlaneModel::new(cfg.plane_k, cfg.plane_d_max)?)
}

/// Simulates every pose file of `dir`, taking each subject from its sidecar
/// and falling back to the configured subject.
pub fn simulate_dir(
    cfg: &Config,
    dir: &Path,
    out_dir: &Path,
    pgm_dir: Option<&Path>,
) -> Result<Vec<SimOutput>, CliError> {
    let plane = plane_of(cfg)?;
    let stems = stems_with(dir, POSE_SUFFIX)?;
    if stems.is_empty() {
        return Err(bad_input(dir, "no *.pose.psim files"));
    }
    stems
        .iter()
        .map(|stem| {
            let pose = dir.join(format!("{stem}{POSE_SUFFIX}"));
            let subject = read_subject(&pose)?.unwrap_or_else(|| cfg.subject.clone());
            simulate_file(&pose, out_dir, &subject, &plane, cfg.pressure_fps, pgm_dir)
        })
        .collect()
}

// ------------------------------------------------------------- corpus

/// Windows of one sequence inside a [`Corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub stem: String,
    pub windows: Range<usize>,
    /// Timestamp of each window's target frame.
    pub target_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub data: WindowedDataset,
    pub sequences: Vec<SequenceRecord>,
}

impl Corpus {
    pub fn joints(&self) -> usize {
        self.data.joints()
    }
}

/// Aligns and windows every simulated sequence of `dir`, in stem order.
/// Without `need_truth`, a sequence lacking a pressure file is windowed on
/// its deformation timestamps with all-zero targets.
pub fn load_corpus(dir: &Path, tolerance: f64, need_truth: bool) -> Result<Corpus, CliError> {
    let stems: Vec<String> = stems_with(dir, POSE_SUFFIX)?
        .into_iter()
        .filter(|s| {
            dir.join(format!("{s}{DEFORM_SUFFIX}")).exists()
                && (!need_truth || dir.join(format!("{s}{PRESSURE_SUFFIX}")).exists())
        })
        .collect();
    if stems.is_empty() {
        return Err(bad_input(
            dir,
            "no simulated sequences (run `pressim simulate` first)",
        ));
    }
    let mut data: Option<WindowedDataset> = None;
    let mut sequences = Vec::new();
    for stem in stems {
        let path = |suffix: &str| dir.join(format!("{stem}{suffix}"));
        let pose = read_sequence(&path(POSE_SUFFIX))?;
        let deform = read_sequence(&path(DEFORM_SUFFIX))?;
        let pressure = if path(PRESSURE_SUFFIX).exists() {
            read_sequence(&path(PRESSURE_SUFFIX))?
        } else {
            let zeros = vec![PressureFrame::zeros(); deform.frame_count()];
            SequenceFile::new(deform.timestamps().to_vec(), Payload::Pressure(zeros))?
        };
        let Payload::Pose { joints, frames } = pose.payload() else {
            return Err(bad_input(&path(POSE_SUFFIX), "not a pose sequence"));
        };
        let d = deform
            .deformation()
            .ok_or_else(|| bad_input(&path(DEFORM_SUFFIX), "not a deformation sequence"))?;
        let p = pressure
            .pressure()
            .ok_or_else(|| bad_input(&path(PRESSURE_SUFFIX), "not a pressure sequence"))?;
        let entries = align_timestamps(
            pose.timestamps(),
            deform.timestamps(),
            pressure.timestamps(),
            tolerance,
        )?;
        let ds = data
            .get_or_insert_with(|| WindowedDataset::new(*joints, WINDOW, Normalization::default()));
        if ds.joints() != *joints {
            return Err(bad_input(
                &path(POSE_SUFFIX),
                format!("{joints} joints, other sequences have {}", ds.joints()),
            ));
        }
        let windows = ds.push_sequence(&entries, frames, d, p)?;
        let target_times = (0..windows.len())
            .map(|w| entries[w + WINDOW - 1].timestamp)
            .collect();
        sequences.push(SequenceRecord {
            stem,
            windows,
            target_times,
        });
    }
    Ok(Corpus {
        data: data.expect("at least one sequence"),
        sequences,
    })
}

// -------------------------------------------------------------- split

/// Window indices local to one sequence. `train` already excludes windows
/// sharing frames with held-out ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSplit {
    pub stem: String,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits each sequence separately into contiguous blocks.
pub fn split_corpus(cfg: &Config, corpus: &Corpus) -> Result<Vec<SequenceSplit>, CliError> {
    corpus
        .sequences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sp = split(
                s.windows.len(),
                cfg.split,
                derive_seed(cfg.seed, "split", i as u64),
                WINDOW - 1,
            )?;
            Ok(SequenceSplit {
                stem: s.stem.clone(),
                train: sp.guarded_train(),
                val: sp.val,
                test: sp.test,
            })
        })
        .collect()
}

fn ranges_text(v: &[usize]) -> String {
    let mut sorted = v.to_vec();
    sorted.sort_unstable();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[j] + 1 {
            j += 1;
        }
        parts.push(if i == j {
            sorted[i].to_string()
        } else {
            format!("{}-{}", sorted[i], sorted[j])
        });
        i = j + 1;
    }
    parts.join(",")
}

fn parse_ranges(s: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => out.extend(a.parse::<usize>().ok()?..=b.parse::<usize>().ok()?),
            None => out.push(part.parse().ok()?),
        }
    }
    Some(out)
}

pub fn write_splits(path: &Path, splits: &[SequenceSplit]) -> Result<(), CliError> {
    let mut text = String::from("# stem\tset\twindows\n");
    for s in splits {
        for (name, v) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
            text.push_str(&format!("{}\t{name}\t{}\n", s.stem, ranges_text(v)));
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_splits(path: &Path) -> Result<Vec<SequenceSplit>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out: Vec<SequenceSplit> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = || {
            bad_input(
                path,
                format!("line {}: expected `stem<TAB>set<TAB>windows`", n + 1),
            )
        };
        let cols: Vec<&str> = line.split('\t').collect();
        let [stem, set, windows] = cols[..] else {
            return Err(bad());
        };
        let windows = parse_ranges(windows).ok_or_else(bad)?;
        if out.last().is_none_or(|s| s.stem != stem) {
            out.push(SequenceSplit {
                stem: stem.to_string(),
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            });
        }
        let s = out.last_mut().expect("pushed");
        match set {
            "train" => s.train = windows,
            "val" => s.val = windows,
            "test" => s.test = windows,
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

// -------------------------------------------------------------- train

/// A window view presented in any precision.
struct Precise<'a>(WindowView<'a>);

impl<T: Real> SampleSource<T> for Precise<'_> {
    fn len(&self) -> usize {
        SampleSource::<f32>::len(&self.0)
    }

    fn batch(&self, indices: &[usize]) -> (Vec<Tensor<T>>, Tensor<T>) {
        let (x, y) = self.0.batch(indices);
        (x.iter().map(|t| t.cast()).collect(), y.cast())
    }
}

fn global(
    corpus: &Corpus,
    splits: &[SequenceSplit],
    pick: fn(&SequenceSplit) -> &[usize],
) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for sp in splits {
        let rec = corpus
            .sequences
            .iter()
            .find(|r| r.stem == sp.stem)
            .ok_or_else(|| {
                CliError::Usage(format!("split names unknown sequence `{}`", sp.stem))
            })?;
        for &w in pick(sp) {
            if w >= rec.windows.len() {
                return Err(CliError::Usage(format!(
                    "split window {w} out of range for `{}`",
                    sp.stem
                )));
            }
            out.push(rec.windows.start + w);
        }
    }
    Ok(out)
}

/// All four trained networks.
#[derive(Debug, Clone)]
pub struct Models<T> {
    pub tpn: Network<T>,
    pub tdn: Network<T>,
    pub psn: Network<T>,
    pub baseline: Network<T>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub models: Models<T>,
    pub histories: Vec<(NetworkKind, TrainHistory)>,
    /// Final (alpha, beta) of joint training.
    pub fusion: Option<(f64, f64)>,
}

/// Per-epoch progress callback: network, epoch record.
pub type Progress<'a> = &'a mut dyn FnMut(NetworkKind, &pressim_core::neuralnet::EpochRecord);

fn fit<T: Real>(
    net: Network<T>,
    data: &dyn SampleSource<T>,
    val: Option<&dyn SampleSource<T>>,
    hyper: &Hyperparams,
    progress: &mut Progress<'_>,
) -> Result<(Network<T>, TrainHistory), NetError> {
    let one = Hyperparams {
        epochs: 1,
        ..*hyper
    };
    let mut net = net;
    let mut history = TrainHistory::default();
    for _ in 0..hyper.epochs {
        let (n, h) = train(net, data, val, &one)?;
        net = n;
        for r in &h.epochs {
            progress(net.kind(), r);
        }
        history.epochs.extend(h.epochs);
    }
    Ok((net, history))
}

/// Two-stage schedule: the pose and deformation networks are trained
/// (separately, or jointly under the literal fused loss), then frozen while
/// the fusion network learns from their predictions. The baseline trains on
/// the same windows with its own epoch budget.
pub fn train_all<T: Real>(
    cfg: &Config,
    corpus: &Corpus,
    splits: &[SequenceSplit],
    mut progress: Progress<'_>,
) -> Result<TrainOutcome<T>, CliError> {
    let train_idx = global(corpus, splits, |s| &s.train)?;
    let val_idx = global(corpus, splits, |s| &s.val)?;
    let ds = &corpus.data;
    let view = |idx: &[usize], input, target| Precise(ds.view(idx.to_vec(), input, target));
    let pose_t = view(&train_idx, InputSelection::Pose, TargetKind::RowProfile);
    let pose_v = view(&val_idx, InputSelection::Pose, TargetKind::RowProfile);
    let def_t = view(
        &train_idx,
        InputSelection::Deformation,
        TargetKind::Pressure,
    );
    let def_v = view(&val_idx, InputSelection::Deformation, TargetKind::Pressure);
    let full_t = view(&train_idx, InputSelection::Pose, TargetKind::Pressure);
    let full_v = view(&val_idx, InputSelection::Pose, TargetKind::Pressure);
    let has_val = !val_idx.is_empty();

    let hyper = Hyperparams {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        loss_mode: cfg.loss_mode,
        fusion_weights: (cfg.fusion_alpha, cfg.fusion_beta),
        ..Hyperparams::default()
    };
    let build = |kind: NetworkKind| {
        build_model_for::<T>(
            kind,
            derive_seed(cfg.seed, "model", u64::from(kind.code())),
            corpus.joints(),
        )
    };
    let mut histories = Vec::new();
    let mut fusion = None;

    let (tpn, tdn) = match cfg.loss_mode {
        LossMode::Mse => {
            let (tpn, h) = fit(
                build(NetworkKind::Tpn),
                &pose_t,
                has_val.then_some(&pose_v as &dyn SampleSource<T>),
                &hyper,
                &mut progress,
            )?;
            histories.push((NetworkKind::Tpn, h));
            let (tdn, h) = fit(
                build(NetworkKind::Tdn),
                &def_t,
                has_val.then_some(&def_v as &dyn SampleSource<T>),
                &hyper,
                &mut progress,
            )?;
            histories.push((NetworkKind::Tdn, h));
            (tpn, tdn)
        }
        LossMode::FusedAbs => {
            let out = train_fused(
                build(NetworkKind::Tpn),
                build(NetworkKind::Tdn),
                &pose_t,
                &def_t,
                &hyper,
            )?;
            for r in &out.history.epochs {
                progress(NetworkKind::Tdn, r);
            }
            histories.push((NetworkKind::Tdn, out.history));
            fusion = Some((out.alpha, out.beta));
            (out.tpn, out.tdn)
        }
    };

    let stacked = |pose: &Precise<'_>,
                   def: &Precise<'_>,
                   full: &Precise<'_>|
     -> Result<TensorDataset<T>, CliError> {
        let p = predict_all(&tpn, pose, cfg.batch_size)?;
        let q = predict_all(&tdn, def, cfg.batch_size)?;
        let all: Vec<usize> = (0..SampleSource::<T>::len(full)).collect();
        let (_, y) = SampleSource::<T>::batch(full, &all);
        Ok(TensorDataset::new(vec![p, q], y)?)
    };
    let psn_t = stacked(&pose_t, &def_t, &full_t)?;
    let psn_v = if val_idx.is_empty() {
        None
    } else {
        Some(stacked(&pose_v, &def_v, &full_v)?)
    };
    let psn_hyper = Hyperparams {
        loss_mode: LossMode::Mse,
        ..hyper
    };
    let (psn, h) = fit(
        build(NetworkKind::Psn),
        &psn_t,
        psn_v.as_ref().map(|v| v as &dyn SampleSource<T>),
        &psn_hyper,
        &mut progress,
    )?;
    histories.push((NetworkKind::Psn, h));

    let base_hyper = Hyperparams {
        epochs: cfg.baseline_budget(),
        loss_mode: LossMode::Mse,
        ..hyper
    };
    let (baseline, h) = fit(
        build(NetworkKind::Baseline),
        &full_t,
        has_val.then_some(&full_v as &dyn SampleSource<T>),
        &base_hyper,
        &mut progress,
    )?;
    histories.push((NetworkKind::Baseline, h));

    Ok(TrainOutcome {
        models: Models {
            tpn,
            tdn,
            psn,
            baseline,
        },
        histories,
        fusion,
    })
}

fn checkpoint_name(kind: NetworkKind) -> String {
    format!("{kind}.ckpt").to_lowercase()
}

fn checkpoint_err(path: &Path) -> impl FnOnce(NetError) -> CliError + '_ {
    move |source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes checkpoints, history CSVs and the split.
pub fn save_outcome<T: Real>(
    dir: &Path,
    outcome: &TrainOutcome<T>,
    splits: &[SequenceSplit],
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let m = &outcome.models;
    for net in [&m.tpn, &m.tdn, &m.psn, &m.baseline] {
        let path = dir.join(checkpoint_name(net.kind()));
        save_checkpoint(&net.cast::<f32>(), &path).map_err(checkpoint_err(&path))?;
    }
    for (kind, h) in &outcome.histories {
        let path = dir.join(format!("history_{kind}.csv").to_lowercase());
        fs::write(&path, h.to_csv()).map_err(io_err(&path))?;
    }
    if let Some((a, b)) = outcome.fusion {
        let path = dir.join("fusion_weights.txt");
        fs::write(&path, format!("alpha = {a}\nbeta = {b}\n")).map_err(io_err(&path))?;
    }
    write_splits(&dir.join(SPLIT_FILE), splits)
}

pub fn load_models<T: Real>(dir: &Path) -> Result<Models<T>, CliError> {
    let load = |kind: NetworkKind| -> Result<Network<T>, CliError> {
        let path = dir.join(checkpoint_name(kind));
        Ok(load_checkpoint(&path, Some(kind))
            .map_err(checkpoint_err(&path))?
            .cast())
    };
    Ok(Models {
        tpn: load(NetworkKind::Tpn)?,
        tdn: load(NetworkKind::Tdn)?,
        psn: load(NetworkKind::Psn)?,
        baseline: load(NetworkKind::Baseline)?,
    })
}

// -------------------------------------------------------------- synth

/// Network output in whole mmHg within the sensor range.
fn to_frames<T: Real>(y: &Tensor<T>, norm: &Normalization) -> Result<Vec<PressureFrame>, CliError> {
    if !y.all_finite() {
        return Err(CliError::Numerical("non-finite network output".into()));
    }
    Ok(y.data()
        .chunks_exact(GRID_CELLS)
        .map(|c| {
            let v = c
                .iter()
                .map(|x| {
                    (Real::to_f32(*x) * norm.pressure_max)
                        .round()
                        .clamp(0.0, norm.pressure_max)
                })
                .collect();
            Grid::pressure(v).expect("clamped into range")
        })
        .collect())
}

/// Synthesized frames of one sequence for both models.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub timestamps: Vec<f64>,
    pub pressim: Vec<PressureFrame>,
    pub baseline: Vec<PressureFrame>,
}

/// Runs both models over the given local windows of one sequence.
pub fn synthesize<T: Real>(
    models: &Models<T>,
    corpus: &Corpus,
    record: &SequenceRecord,
    windows: &[usize],
    batch: usize,
) -> Result<Synthesized, CliError> {
    let idx: Vec<usize> = windows.iter().map(|&w| record.windows.start + w).collect();
    let ds = &corpus.data;
    let pose = Precise(ds.view(idx.clone(), InputSelection::Pose, TargetKind::Pressure));
    let def = Precise(ds.view(idx, InputSelection::Deformation, TargetKind::Pressure));
    let p = predict_all(&models.tpn, &pose, batch)?;
    let q = predict_all(&models.tdn, &def, batch)?;
    let mut fused = Vec::with_capacity(p.len());
    for s in (0..p.batch()).collect::<Vec<_>>().chunks(batch.max(1)) {
        let y = models.psn.predict(&[&p.gather(s), &q.gather(s)])?;
        fused.extend_from_slice(y.data());
    }
    let fused = Tensor::new(p.shape().to_vec(), fused)?;
    let base = predict_all(&models.baseline, &pose, batch)?;
    let norm = ds.normalization();
    Ok(Synthesized {
        timestamps: windows.iter().map(|&w| record.target_times[w]).collect(),
        pressim: to_frames(&fused, norm)?,
        baseline: to_frames(&base, norm)?,
    })
}

pub fn synth_path(dir: &Path, stem: &str, model: &str) -> PathBuf {
    dir.join(format!("{stem}.{model}.psim"))
}

/// Synthesizes the test windows (or all windows) of every sequence named in
/// the split and writes one file per sequence and model.
pub fn synthesize_dir<T: Real>(
    cfg: &Config,
    corpus: &Corpus,
    models: &Models<T>,
    splits: &[SequenceSplit],
    all: bool,
    out_dir: &Path,
) -> Result<usize, CliError> {
    ensure_dir(out_dir)?;
    let mut frames = 0;
    for rec in &corpus.sequences {
        let windows: Vec<usize> = if all {
            (0..rec.windows.len()).collect()
        } else {
            let Some(sp) = splits.iter().find(|s| s.stem == rec.stem) else {
                continue;
            };
            let mut t = sp.test.clone();
            t.sort_unstable();
            t
        };
        if windows.is_empty() {
            continue;
        }
        let s = synthesize(models, corpus, rec, &windows, cfg.batch_size)?;
        frames += s.timestamps.len();
        for (name, maps) in [(PRESSIM, s.pressim), (BASELINE, s.baseline)] {
            let seq = SequenceFile::new(s.timestamps.clone(), Payload::Pressure(maps))?;
            write_sequence(&synth_path(out_dir, &rec.stem, name), &seq)?;
        }
    }
    Ok(frames)
}

// --------------------------------------------------------------- eval

/// Ground-truth frames at the timestamps of `pred`.
fn matched_truth(
    pred: &SequenceFile,
    truth: &SequenceFile,
    pred_path: &Path,
) -> Result<(Vec<PressureFrame>, Vec<PressureFrame>), CliError> {
    let p = pred
        .pressure()
        .ok_or_else(|| bad_input(pred_path, "not a pressure sequence"))?;
    let g = truth
        .pressure()
        .ok_or_else(|| bad_input(pred_path, "ground truth is not a pressure sequence"))?;
    let ts = truth.timestamps();
    let mut gt = Vec::with_capacity(p.len());
    for &t in pred.timestamps() {
        let i = ts.partition_point(|&x| x < t);
        if i == ts.len() || ts[i] != t {
            return Err(bad_input(
                pred_path,
                format!("no ground-truth frame at t = {t}"),
            ));
        }
        gt.push(g[i].clone());
    }
    Ok((p.to_vec(), gt))
}

/// Scores synthesized files against the data directory's ground truth. Every
/// model is scored on the same frames: the sequences present for all models.
pub fn compare_dir(
    data_dir: &Path,
    synth_dir: &Path,
    models: &[&str],
) -> Result<MetricReport, CliError> {
    let first = models
        .first()
        .ok_or_else(|| CliError::Usage("no models to compare".into()))?;
    let stems = stems_with(synth_dir, &format!(".{first}.psim"))?;
    let stems: Vec<String> = stems
        .into_iter()
        .filter(|s| models.iter().all(|m| synth_path(synth_dir, s, m).exists()))
        .collect();
    if stems.is_empty() {
        return Err(bad_input(
            synth_dir,
            "no synthesized sequences for the requested models",
        ));
    }
    let mut preds: Vec<Vec<PressureFrame>> = vec![Vec::new(); models.len()];
    let mut gt = Vec::new();
    for stem in &stems {
        let truth_path = data_dir.join(format!("{stem}{PRESSURE_SUFFIX}"));
        let truth = read_sequence(&truth_path)?;
        for (k, m) in models.iter().enumerate() {
            let path = synth_path(synth_dir, stem, m);
            let (p, g) = matched_truth(&read_sequence(&path)?, &truth, &path)?;
            if k == 0 {
                gt.extend(g);
            }
            preds[k].extend(p);
        }
    }
    let rows: Vec<(&str, &[PressureFrame])> = models
        .iter()
        .copied()
        .zip(preds.iter().map(|p| p.as_slice()))
        .collect();
    Ok(report(&rows, &gt)?)
}

/// Scores one synthesized file against one ground-truth file.
pub fn compare_files(pred: &Path, truth: &Path, model: &str) -> Result<MetricReport, CliError> {
    let (p, g) = matched_truth(&read_sequence(pred)?, &read_sequence(truth)?, pred)?;
    Ok(report(&[(model, &p[..])], &g)?)
}
