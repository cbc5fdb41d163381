//! Experiment execution: one job per seed, results collected in a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use lip_core::lottery::{
    evaluate_ticket, fit, four_target_curves, imp_multi, imp_single, FitConfig, FitResult, ImpTrace, Provenance, Ticket,
    ROUND_LOSS_TAIL,
};
use lip_core::numerics::Tensor;
use lip_core::persist::{load_checkpoint, load_mask, save_checkpoint, save_mask, write_atomic, Checkpoint};
use lip_core::priors::{InputCode, NetworkSpec, PriorNetwork};
use lip_core::pruning::{layer_sparsity_report, random_prune, snip_prune, synflow_prune, Mask, RandomProfile};
use lip_core::tasks::{make_observation, psnr, save_image, ssim, Observation};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, PruneMethod};
use crate::dataset::{ingest_dataset, DatasetImage};
use crate::error::{CliError, Result};
use crate::manifest::{code_version, summarize, Artifact, CurveRow, RunManifest, RunStatus, SeedRecord};

/// Environment variable that forces a single worker.
pub const DETERMINISTIC_ENV: &str = "LIP_DETERMINISTIC";

pub const TICKET_FILE: &str = "ticket.json";

/// Worker count after applying [`DETERMINISTIC_ENV`].
pub fn effective_jobs(requested: usize) -> usize {
    let forced = std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| !v.is_empty() && v != "0");
    if forced {
        1
    } else {
        requested.max(1)
    }
}

/// Runs `kind` for every configured seed and writes the manifest to `out`.
/// Seeds run in parallel on `jobs` workers; results do not depend on `jobs`.
pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunManifest> {
    cfg.validate(kind)?;
    let start = Instant::now();
    fs::create_dir_all(out).map_err(CliError::io(out))?;

    let ticket = match kind {
        ExperimentKind::EvalTicket | ExperimentKind::FourTargets => {
            Some(load_ticket(cfg.ticket.as_deref().expect("validated"), cfg.ticket_round)?)
        }
        _ => None,
    };
    let spec_for = |channels| ticket.as_ref().map_or_else(|| cfg.network.spec(channels), |t| t.spec.clone());
    let images = ingest_dataset(&cfg.input, spec_for(3).size_divisor())?;
    let spec = spec_for(images[0].image.shape()[1]);
    if spec.out_channels != images[0].image.shape()[1] {
        return Err(CliError::Usage(format!(
            "ticket produces {} channels but the images have {}",
            spec.out_channels,
            images[0].image.shape()[1]
        )));
    }

    let jobs = effective_jobs(jobs);
    let manifest = RunManifest {
        kind: kind.name().into(),
        config_hash: cfg.hash(kind),
        code_version: code_version(),
        status: RunStatus::Running,
        jobs,
        total_seconds: 0.0,
        config: cfg.clone(),
        seeds: Vec::new(),
        summary: Vec::new(),
    };
    manifest.save(out)?;
    info!("{} on {} image(s), seeds {:?}, {} job(s) -> {}", kind.name(), images.len(), cfg.seeds, jobs, out.display());

    let ctx = Context { cfg, kind, spec, images, out: out.to_path_buf(), ticket };
    let shared = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| {
        cfg.seeds.par_iter().for_each(|&seed| {
            let record = ctx.run_seed(seed);
            let mut m = shared.lock().expect("manifest lock");
            m.seeds.push(record);
            m.seeds.sort_by_key(|s| cfg.seeds.iter().position(|&x| x == s.seed));
            // Keep the on-disk manifest current so an interrupted run leaves a record.
            if let Err(e) = m.save(out) {
                log::error!("could not update manifest: {e}");
            }
        })
    });

    let mut manifest = shared.into_inner().expect("manifest lock");
    let failed = manifest.seeds.iter().filter(|s| s.status == RunStatus::Failed).count();
    manifest.status = if failed == 0 { RunStatus::Complete } else { RunStatus::Failed };
    manifest.total_seconds = start.elapsed().as_secs_f64();
    manifest.summary = summarize(manifest.rows());
    manifest.save(out)?;
    if failed > 0 {
        return Err(CliError::RunFailed { failed, total: manifest.seeds.len(), manifest: out.join(crate::manifest::MANIFEST_FILE) });
    }
    Ok(manifest)
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    kind: ExperimentKind,
    spec: NetworkSpec,
    images: Vec<DatasetImage>,
    out: PathBuf,
    ticket: Option<Ticket>,
}

/// Collects the files and rows one seed produces.
struct SeedOutput<'a> {
    root: &'a Path,
    seed: u64,
    artifacts: Vec<Artifact>,
    rows: Vec<CurveRow>,
}

impl SeedOutput<'_> {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        Ok(p)
    }

    fn record(&mut self, kind: &str, rel: String, image: &str, method: Option<&str>, round: Option<usize>) -> String {
        self.artifacts.push(Artifact {
            kind: kind.into(),
            path: rel.clone(),
            image: Some(image.into()),
            method: method.map(Into::into),
            round,
        });
        rel
    }

    fn mask(&mut self, rel: String, mask: &Mask, image: &str, method: &str, round: usize) -> Result<String> {
        save_mask(mask, self.path(&rel)?)?;
        Ok(self.record("mask", rel, image, Some(method), Some(round)))
    }

    fn image(&mut self, rel: String, t: &Tensor, image: &str, method: Option<&str>, round: Option<usize>) -> Result<()> {
        save_image(t, self.path(&rel)?)?;
        self.record("restored", rel, image, method, round);
        Ok(())
    }

    fn text(&mut self, kind: &str, rel: String, body: &str, image: &str) -> Result<()> {
        write_atomic(self.path(&rel)?, body.as_bytes())?;
        self.record(kind, rel, image, None, None);
        Ok(())
    }

    /// Rows for one fit, scored against every observation's clean image.
    #[allow(clippy::too_many_arguments)]
    fn score(
        &mut self,
        method: &str,
        round: usize,
        mask: &Mask,
        nonprunable: usize,
        mask_file: &str,
        r: &FitResult,
        observations: &[(&str, &Observation)],
    ) -> Result<()> {
        for (name, obs) in observations {
            let restored = r.final_image();
            self.rows.push(CurveRow {
                method: method.into(),
                seed: self.seed,
                round,
                image: (*name).into(),
                sparsity: mask.sparsity(),
                nonzero_params: mask.kept() + nonprunable,
                fixed_params: nonprunable,
                psnr_db: psnr(restored, obs.clean())?,
                ssim: ssim(restored, obs.clean())?,
                loss: r.tail_loss(ROUND_LOSS_TAIL),
                mask: Some(mask_file.into()),
            });
        }
        Ok(())
    }
}

fn nonprunable(net: &PriorNetwork) -> usize {
    net.params().total_count() - net.params().prunable_count()
}

fn metrics_csv(r: &FitResult, obs: &Observation) -> Result<String> {
    let mut s = String::from("iteration,loss,psnr_db,ssim\n");
    for m in r.metrics(obs)? {
        s.push_str(&format!("{},{},{},{}\n", m.iteration, m.loss, m.psnr_db, m.ssim));
    }
    Ok(s)
}

impl Context<'_> {
    fn run_seed(&self, seed: u64) -> SeedRecord {
        let start = Instant::now();
        let mut out = SeedOutput { root: &self.out, seed, artifacts: Vec::new(), rows: Vec::new() };
        let result = match self.kind {
            ExperimentKind::Fit => self.dense_fits(&mut out),
            ExperimentKind::Imp => self.imp(&mut out),
            ExperimentKind::ImpMulti => self.imp_multi(&mut out),
            ExperimentKind::EvalTicket => self.eval_ticket(&mut out),
            ExperimentKind::BaselinePrune => self.baseline_prune(&mut out),
            ExperimentKind::FourTargets => self.four_targets(&mut out),
        };
        let seconds = start.elapsed().as_secs_f64();
        let (status, error) = match result {
            Ok(()) => {
                info!("seed {seed}: done in {seconds:.1}s");
                (RunStatus::Complete, None)
            }
            Err(e) => {
                log::error!("seed {seed}: {e}");
                (RunStatus::Failed, Some(e.to_string()))
            }
        };
        SeedRecord { seed, status, error, seconds, artifacts: out.artifacts, rows: out.rows }
    }

    fn fit_cfg(&self) -> FitConfig {
        self.cfg.fit_config()
    }

    fn observe(&self, img: &DatasetImage, seed: u64) -> Result<Observation> {
        Ok(make_observation(&img.image, &self.cfg.task, seed)?)
    }

    fn code(&self, seed: u64, img: &DatasetImage) -> Result<InputCode> {
        let s = img.image.shape();
        Ok(InputCode::sample(self.spec.code_shape(s[2], s[3])?, seed))
    }

    /// Fits the network of `seed` under `mask` from its initial weights.
    fn fit_masked(&self, seed: u64, mask: Mask, img: &DatasetImage, obs: &Observation) -> Result<FitResult> {
        let mut net = PriorNetwork::build(&self.spec, seed)?;
        net.set_mask(mask)?;
        Ok(fit(&mut net, &self.code(seed, img)?, obs.objective(), &self.fit_cfg())?)
    }

    fn write_fit(&self, out: &mut SeedOutput, dir: &str, img: &str, method: &str, round: usize, r: &FitResult, obs: &Observation) -> Result<()> {
        out.image(format!("{dir}/{method}_r{round:02}.png"), r.final_image(), img, Some(method), Some(round))?;
        if self.cfg.fit.metric_every.is_some() {
            out.text("metrics", format!("{dir}/{method}_r{round:02}_metrics.csv"), &metrics_csv(r, obs)?, img)?;
        }
        Ok(())
    }

    fn dense_fits(&self, out: &mut SeedOutput) -> Result<()> {
        let seed = out.seed;
        for img in &self.images {
            let obs = self.observe(img, seed)?;
            let dir = format!("seed{seed}/{}", img.name);
            out.image(format!("{dir}/observed.png"), obs.observed(), &img.name, None, None)?;
            let net = PriorNetwork::build(&self.spec, seed)?;
            let mask = Mask::dense_for(net.params());
            let mask_file = out.mask(format!("{dir}/dense.lipm"), &mask, &img.name, "dense", 0)?;
            let r = self.fit_masked(seed, mask.clone(), img, &obs)?;
            info!("seed {seed}: dense fit on {} -> {:.2} dB", img.name, r.final_psnr(&obs)?);
            self.write_fit(out, &dir, &img.name, "dense", 0, &r, &obs)?;
            out.score("dense", 0, &mask, nonprunable(&net), &mask_file, &r, &[(&img.name, &obs)])?;
        }
        Ok(())
    }

    fn imp(&self, out: &mut SeedOutput) -> Result<()> {
        let seed = out.seed;
        let imp_cfg = self.cfg.imp_config();
        for img in &self.images {
            let obs = self.observe(img, seed)?;
            let dir = format!("seed{seed}/{}", img.name);
            out.image(format!("{dir}/observed.png"), obs.observed(), &img.name, None, None)?;
            let provenance = Provenance { sources: vec![img.name.clone()], task: self.cfg.task.name().into(), seed };
            info!("seed {seed}: IMP on {} for {} round(s)", img.name, imp_cfg.rounds);
            let trace = imp_single(&self.spec, obs.objective(), &imp_cfg, &provenance)?;
            self.write_trace(out, &dir, &trace, &[(img, &obs)])?;
            self.imp_baselines(out, &dir, &trace, img, &obs)?;
        }
        Ok(())
    }

    fn imp_multi(&self, out: &mut SeedOutput) -> Result<()> {
        let seed = out.seed;
        let dir = format!("seed{seed}/multi");
        let observations = self.images.iter().map(|img| self.observe(img, seed)).collect::<Result<Vec<_>>>()?;
        for (img, obs) in self.images.iter().zip(&observations) {
            out.image(format!("{dir}/observed_{}.png", img.name), obs.observed(), &img.name, None, None)?;
        }
        let objectives: Vec<_> = observations.iter().map(|o| o.objective().clone()).collect();
        let provenance = Provenance {
            sources: self.images.iter().map(|i| i.name.clone()).collect(),
            task: self.cfg.task.name().into(),
            seed,
        };
        let imp_cfg = self.cfg.imp_config();
        info!("seed {seed}: multi-image IMP on {} image(s) for {} round(s)", objectives.len(), imp_cfg.rounds);
        let trace = imp_multi(&self.spec, &objectives, &imp_cfg, &provenance)?;
        let pairs: Vec<_> = self.images.iter().zip(&observations).collect();
        self.write_trace(out, &dir, &trace, &pairs)
    }

    /// Saves masks, reference weights, restored images and the ticket index.
    fn write_trace(&self, out: &mut SeedOutput, dir: &str, trace: &ImpTrace, data: &[(&DatasetImage, &Observation)]) -> Result<()> {
        let first = &trace.rounds[0].ticket;
        let label = if data.len() == 1 { data[0].0.name.clone() } else { "multi".into() };
        let reference = format!("{dir}/reference.lipw");
        save_checkpoint(&Checkpoint::from_params(&first.reference), out.path(&reference)?)?;
        out.record("checkpoint", reference, &label, Some("lip"), None);
        let net = first.instantiate()?;
        let fixed = nonprunable(&net);

        let mut index = TicketIndex {
            spec: first.spec.clone(),
            provenance: first.provenance.clone(),
            reference: "reference.lipw".into(),
            stop_round: trace.stop_round,
            rounds: Vec::new(),
        };
        for rec in &trace.rounds {
            let t = &rec.ticket;
            let file = format!("round_{:02}.lipm", t.round);
            let mask_file = out.mask(format!("{dir}/{file}"), &t.mask, &label, "lip", t.round)?;
            index.rounds.push(TicketRound { round: t.round, sparsity: t.sparsity(), round_final_loss: t.round_final_loss, mask: file });
            if let Some(r) = &rec.fit {
                let scored: Vec<(&str, &Observation)> = data.iter().map(|(i, o)| (i.name.as_str(), *o)).collect();
                out.score("lip", t.round, &t.mask, fixed, &mask_file, r, &scored)?;
                self.write_fit(out, dir, &label, "lip", t.round, r, data[0].1)?;
                info!(
                    "seed {}: {label} round {} sparsity {:.3} loss {:.5}",
                    out.seed,
                    t.round,
                    t.sparsity(),
                    r.tail_loss(ROUND_LOSS_TAIL)
                );
            }
        }
        let json = serde_json::to_string_pretty(&index)?;
        out.text("ticket", format!("{dir}/{TICKET_FILE}"), &json, &label)
    }

    /// Baseline masks at each pruned round's sparsity, trained from `theta_0`.
    fn imp_baselines(&self, out: &mut SeedOutput, dir: &str, trace: &ImpTrace, img: &DatasetImage, obs: &Observation) -> Result<()> {
        let seed = out.seed;
        let net = PriorNetwork::build(&self.spec, seed)?;
        for rec in trace.rounds.iter().skip(1) {
            let s = rec.ticket.sparsity();
            for &method in &self.cfg.imp.baselines {
                let mask = self.baseline_mask(method, &net, s, img, obs, seed)?;
                let mask_file = out.mask(format!("{dir}/{}_r{:02}.lipm", method.name(), rec.ticket.round), &mask, &img.name, method.name(), rec.ticket.round)?;
                let r = self.fit_masked(seed, mask.clone(), img, obs)?;
                info!("seed {seed}: {} {} at sparsity {s:.3} -> {:.2} dB", img.name, method.name(), r.final_psnr(obs)?);
                self.write_fit(out, dir, &img.name, method.name(), rec.ticket.round, &r, obs)?;
                out.score(method.name(), rec.ticket.round, &mask, nonprunable(&net), &mask_file, &r, &[(&img.name, obs)])?;
            }
        }
        Ok(())
    }

    fn baseline_mask(&self, method: PruneMethod, net: &PriorNetwork, s: f64, img: &DatasetImage, obs: &Observation, seed: u64) -> Result<Mask> {
        let shape = img.image.shape();
        Ok(match method {
            PruneMethod::Random => random_prune(net, &RandomProfile::Uniform(s), seed)?,
            PruneMethod::Profile => {
                let path = self.cfg.prune.profile_mask.as_deref().expect("validated");
                let reference = load_mask(path)?;
                random_prune(net, &RandomProfile::Layers(layer_sparsity_report(&reference).ratios()), seed)?
            }
            PruneMethod::Snip => snip_prune(net, obs.objective(), &self.code(seed, img)?, s)?,
            PruneMethod::Synflow => synflow_prune(net, s, self.cfg.prune.synflow_rounds, shape[2], shape[3])?,
        })
    }

    fn baseline_prune(&self, out: &mut SeedOutput) -> Result<()> {
        let seed = out.seed;
        let method = self.cfg.prune.method;
        let net = PriorNetwork::build(&self.spec, seed)?;
        for img in &self.images {
            let obs = self.observe(img, seed)?;
            let dir = format!("seed{seed}/{}", img.name);
            let mask = self.baseline_mask(method, &net, self.cfg.prune.sparsity, img, &obs, seed)?;
            let mask_file = out.mask(format!("{dir}/{}.lipm", method.name()), &mask, &img.name, method.name(), 0)?;
            let r = self.fit_masked(seed, mask.clone(), img, &obs)?;
            info!("seed {seed}: {} mask at sparsity {:.3} on {} -> {:.2} dB", method.name(), mask.sparsity(), img.name, r.final_psnr(&obs)?);
            self.write_fit(out, &dir, &img.name, method.name(), 0, &r, &obs)?;
            out.score(method.name(), 0, &mask, nonprunable(&net), &mask_file, &r, &[(&img.name, &obs)])?;
        }
        Ok(())
    }

    fn eval_ticket(&self, out: &mut SeedOutput) -> Result<()> {
        let seed = out.seed;
        let ticket = self.ticket.as_ref().expect("loaded");
        let fixed = nonprunable(&ticket.instantiate()?);
        for img in &self.images {
            let obs = self.observe(img, seed)?;
            let dir = format!("seed{seed}/{}", img.name);
            out.image(format!("{dir}/observed.png"), obs.observed(), &img.name, None, None)?;
            let mask_file = out.mask(format!("{dir}/ticket.lipm"), &ticket.mask, &img.name, "ticket", ticket.round)?;
            let r = evaluate_ticket(ticket, obs.objective(), &self.fit_cfg())?;
            info!("seed {seed}: ticket round {} on {} ({}) -> {:.2} dB", ticket.round, img.name, self.cfg.task.name(), r.final_psnr(&obs)?);
            self.write_fit(out, &dir, &img.name, "ticket", ticket.round, &r, &obs)?;
            out.score("ticket", ticket.round, &ticket.mask, fixed, &mask_file, &r, &[(&img.name, &obs)])?;
        }
        Ok(())
    }

    fn four_targets(&self, out: &mut SeedOutput) -> Result<()> {
        let seed = out.seed;
        let ticket = self.ticket.as_ref().expect("loaded");
        let s = self.cfg.four_targets.sparsity.unwrap_or_else(|| ticket.sparsity());
        let net = PriorNetwork::build(&self.spec, seed)?;
        let mut areas = String::from("image,net,target,area\n");
        for img in &self.images {
            let obs = lip_core::tasks::Objective::plain(img.image.clone())?;
            let code = self.code(seed, img)?;
            let nets = vec![
                ("dense".to_string(), Mask::dense_for(net.params())),
                ("lip".to_string(), ticket.mask.clone()),
                ("snip".to_string(), snip_prune(&net, &obs, &code, s)?),
                ("random".to_string(), random_prune(&net, &RandomProfile::Uniform(s), seed)?),
            ];
            info!("seed {seed}: four-target curves on {} at sparsity {s:.3}", img.name);
            let curves = four_target_curves(&self.spec, seed, &nets, &img.image, &self.fit_cfg())?;
            let mut csv = String::from("net,target,iteration,loss\n");
            for c in &curves {
                for (i, l) in c.losses.iter().enumerate() {
                    csv.push_str(&format!("{},{},{},{l}\n", c.net, c.target.name(), i + 1));
                }
                areas.push_str(&format!("{},{},{},{}\n", img.name, c.net, c.target.name(), c.area()));
            }
            out.text("loss_curves", format!("seed{seed}/{}/four_targets.csv", img.name), &csv, &img.name)?;
        }
        let label = "all";
        out.text("loss_areas", format!("seed{seed}/four_target_areas.csv"), &areas, label)
    }
}

/// Index of one IMP run's tickets, stored next to the mask files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TicketIndex {
    pub spec: NetworkSpec,
    pub provenance: Provenance,
    pub reference: String,
    pub stop_round: Option<usize>,
    pub rounds: Vec<TicketRound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TicketRound {
    pub round: usize,
    pub sparsity: f64,
    pub round_final_loss: Option<f64>,
    pub mask: String,
}

/// Loads round `round` (default: the last) of a ticket directory.
pub fn load_ticket(dir: &Path, round: Option<usize>) -> Result<Ticket> {
    let index_path = dir.join(TICKET_FILE);
    let text = fs::read_to_string(&index_path).map_err(CliError::io(&index_path))?;
    let index: TicketIndex = serde_json::from_str(&text)?;
    let entry = match round {
        Some(r) => index
            .rounds
            .iter()
            .find(|e| e.round == r)
            .ok_or_else(|| CliError::field("ticket_round", format!("ticket has no round {r}")))?,
        None => index.rounds.last().ok_or_else(|| CliError::field("ticket", "ticket index lists no rounds"))?,
    };
    let template = PriorNetwork::build(&index.spec, index.provenance.seed)?;
    let reference = load_checkpoint(dir.join(&index.reference))?.into_params(template.initial_params())?;
    let mask = load_mask(dir.join(&entry.mask))?;
    mask.check_matches(&reference)?;
    Ok(Ticket {
        spec: index.spec,
        mask,
        reference,
        round: entry.round,
        round_final_loss: entry.round_final_loss,
        provenance: index.provenance,
    })
}
