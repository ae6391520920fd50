//! The build-rom, optimize, simulate, infoflow and export stages.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chaintwin::container::Persist;
use chaintwin::control::{self, ControlSequence, Echo, EraseRecover, OptimizeResult, Transfer};
use chaintwin::exactsim::{self, InfoFlowMap, SimConfig};
use chaintwin::models::{self, CircuitLayout};
use chaintwin::rom::{self, ReducedOrderModel, Trajectory};
use chaintwin::C64;
use serde_json::{json, Value};

use crate::artifacts::{self, fmt, seed_dir, write_csv, AnyResult, Entry, Manifest};
use crate::config::{ExperimentConfig, TaskConfig};

pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl Run {
    pub fn open(cfg: ExperimentConfig, out: PathBuf) -> AnyResult<Self> {
        std::fs::create_dir_all(&out)?;
        let echo = serde_json::to_value(&cfg)?;
        let manifest = Manifest::open(&out, echo, &cfg.seeds)?;
        Ok(Self { cfg, out, manifest })
    }

    fn seeds(&self) -> Vec<u64> {
        self.cfg.realization_seeds()
    }

    fn layout(&self, seed: u64) -> AnyResult<CircuitLayout> {
        Ok(self.cfg.model.layout(seed)?)
    }

    /// Initial states of every model built for one realization: one for
    /// most tasks, one per tetrahedron state of Bob's spin for transfer.
    fn model_inputs(&self) -> Vec<Vec<[C64; 2]>> {
        let base = self.cfg.initial_states();
        match self.cfg.task {
            TaskConfig::Transfer { bob, .. } => control::tetrahedron_states()
                .iter()
                .map(|t| {
                    let mut init = base.clone();
                    init[bob] = t.psi;
                    init
                })
                .collect(),
            _ => vec![base],
        }
    }

    fn rom_paths(&self, seed: u64) -> Vec<PathBuf> {
        let dir = seed_dir(&self.out, seed);
        match self.cfg.task {
            TaskConfig::Transfer { .. } => (0..4).map(|i| dir.join(format!("rom_bob{i}.ctw"))).collect(),
            _ => vec![dir.join("rom.ctw")],
        }
    }

    fn load_roms(&self, seed: u64) -> AnyResult<Vec<ReducedOrderModel>> {
        self.rom_paths(seed)
            .iter()
            .map(|p| {
                artifacts::require(p).map_err(|e| format!("{e}; run build-rom first"))?;
                Ok(ReducedOrderModel::load(p)?)
            })
            .collect()
    }

    fn exact_allowed(&self) -> bool {
        self.cfg.analysis.exact && self.cfg.model.n() <= self.cfg.analysis.exact_max_spins
    }

    pub fn build_rom(&mut self) -> AnyResult<()> {
        let started = Instant::now();
        let mut per_seed = serde_json::Map::new();
        let mut warnings = vec![];
        for seed in self.seeds() {
            let layout = self.layout(seed)?;
            let dir = seed_dir(&self.out, seed);
            std::fs::create_dir_all(&dir)?;
            let cone = if self.cfg.analysis.light_cone && self.exact_allowed() {
                let a = &self.cfg.analysis;
                Some(exactsim::light_cone_dim(
                    &layout,
                    &self.cfg.initial_states(),
                    a.cone_delta,
                    a.cone_criterion.criterion(),
                    &SimConfig::default(),
                )?)
            } else {
                None
            };
            let mut models = vec![];
            for (init, path) in self.model_inputs().iter().zip(self.rom_paths(seed)) {
                let t = Instant::now();
                let rom = ReducedOrderModel::build(&layout, init, &self.cfg.truncation.config(), self.cfg.truncation.route())?;
                let seconds = t.elapsed().as_secs_f64();
                rom.save(&path)?;
                if rom.exceeded_budget() {
                    let msg = format!("seed {seed}: rank cap r_max = {} reached, realized truncation error {:.3e}", self.cfg.truncation.r_max, rom.truncation_error());
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                let ranks = rom.ranks();
                let dims = rom.eff_dims();
                let mut e = Entry::default();
                e.set("file", path.file_name().unwrap().to_string_lossy().to_string())
                    .set("truncation_error", rom.truncation_error())
                    .set("exceeded_budget", rom.exceeded_budget())
                    .set("degenerate_steps_left", rom.left().network.degenerate_steps().to_vec())
                    .set("degenerate_steps_right", rom.right().network.degenerate_steps().to_vec())
                    .set("final_d_eff", *dims.last().unwrap())
                    .set("max_d_eff", *dims.iter().max().unwrap())
                    .set("ranks_left", ranks.iter().map(|r| r.0).collect::<Vec<_>>())
                    .set("ranks_right", ranks.iter().map(|r| r.1).collect::<Vec<_>>())
                    .set("build_seconds", seconds);
                models.push(e.into_value());
                if models.len() == 1 {
                    write_ranks(&dir.join("ranks.csv"), &rom, layout.n(), cone.as_ref())?;
                }
            }
            let mut e = Entry::default();
            e.set("models", models);
            if let Some(c) = &cone {
                e.set("light_cone_bound", c.bound.clone()).set("cone_delta", c.delta);
            }
            per_seed.insert(seed.to_string(), e.into_value());
        }
        let mut e = Entry::default();
        e.set("per_seed", Value::Object(per_seed)).set("warnings", warnings).set("seconds", started.elapsed().as_secs_f64());
        self.manifest.set_stage("build_rom", e.into_value())
    }

    pub fn optimize(&mut self) -> AnyResult<()> {
        let started = Instant::now();
        let steps = self.cfg.model.steps();
        let mut per_seed = serde_json::Map::new();
        for seed in self.seeds() {
            let roms = self.load_roms(seed)?;
            let dir = seed_dir(&self.out, seed);
            let opt = self.cfg.optimizer.config(seed);
            let mut runs = serde_json::Map::new();
            let mut record = |name: &str, res: &OptimizeResult| -> AnyResult<()> {
                res.controls.save(dir.join(format!("controls_{name}.ctw")))?;
                write_csv(
                    &dir.join(format!("loss_{name}.csv")),
                    &["iter", "loss", "grad_norm"],
                    res.history.iter().map(|h| vec![h.iter.to_string(), fmt(h.loss), fmt(h.grad_norm)]),
                )?;
                let mut e = Entry::default();
                e.set("best_loss", res.best_loss)
                    .set("iterations", res.history.len())
                    .set("converged", res.converged)
                    .set("window", vec![res.controls.k_start(), res.controls.k_stop()])
                    .set("controls_hash", artifacts::controls_hash(&res.controls));
                runs.insert(name.into(), e.into_value());
                Ok(())
            };
            match &self.cfg.task {
                TaskConfig::Simulate { .. } => {}
                TaskConfig::Echo { window, flip_at, baselines } => {
                    let obj = Echo { rom: &roms[0] };
                    let t = Instant::now();
                    let multi = control::optimize(&obj, window[0], window[1], &opt)?;
                    log::info!("seed {seed}: multistep echo done in {:.1}s", t.elapsed().as_secs_f64());
                    record("multistep", &multi)?;
                    let k = flip_at.unwrap_or((window[0] + window[1]) / 2);
                    let single = control::optimize(&obj, k, k + 1, &opt)?;
                    record("single_gate", &single)?;
                    if *baselines {
                        control::spin_echo(k).save(dir.join("controls_spin_echo.ctw"))?;
                        control::two_flip_echo(k, steps)?.save(dir.join("controls_two_flip.ctw"))?;
                    }
                }
                TaskConfig::EraseRecover { .. } => {
                    let [a, b] = self.cfg.control_window().expect("erase-recover has a window");
                    let obj = EraseRecover::new(&roms[0])?;
                    record("optimized", &control::optimize(&obj, a, b, &opt)?)?;
                }
                TaskConfig::Transfer { .. } => {
                    let [a, b] = self.cfg.control_window().expect("transfer has a window");
                    let obj = Transfer::tetrahedron(&roms)?;
                    let res = control::optimize(&obj, a, b, &opt)?;
                    record("optimized", &res)?;
                    write_bloch_points(&dir.join("bloch_points.csv"), &obj, &res.controls)?;
                }
            }
            per_seed.insert(seed.to_string(), Value::Object(runs));
        }
        let mut e = Entry::default();
        e.set("optimizer", serde_json::to_value(&self.cfg.optimizer)?)
            .set("per_seed", Value::Object(per_seed))
            .set("seconds", started.elapsed().as_secs_f64());
        self.manifest.set_stage("optimize", e.into_value())
    }

    /// Control sequences of one realization: `none`, the configured random
    /// window, and every saved protocol.
    fn protocols(&self, seed: u64) -> AnyResult<Vec<(String, Option<ControlSequence>)>> {
        let mut out = vec![("none".to_owned(), None)];
        if let TaskConfig::Simulate { random_window: Some(w) } = self.cfg.task {
            out.push(("random".into(), Some(ControlSequence::random(w[0], w[1], 2, seed))));
        }
        for name in ["multistep", "single_gate", "spin_echo", "two_flip", "optimized"] {
            let p = seed_dir(&self.out, seed).join(format!("controls_{name}.ctw"));
            if p.exists() {
                out.push((name.into(), Some(ControlSequence::load(&p)?)));
            }
        }
        Ok(out)
    }

    pub fn simulate(&mut self) -> AnyResult<()> {
        let started = Instant::now();
        let mut per_seed = serde_json::Map::new();
        let mut worst: f64 = 0.0;
        let exact = self.exact_allowed();
        for seed in self.seeds() {
            let roms = self.load_roms(seed)?;
            let layout = self.layout(seed)?;
            let dir = seed_dir(&self.out, seed);
            let inputs = self.model_inputs();
            let mut runs = serde_json::Map::new();
            for (name, controls) in self.protocols(seed)? {
                let c = controls.as_ref();
                if let Some(c) = c {
                    c.save(dir.join(format!("controls_{name}.ctw")))?;
                }
                let mut e = Entry::default();
                let traj = roms[0].propagate(c)?;
                artifacts::write_trajectory(&dir.join(format!("trajectory_rom_{name}.csv")), &traj)?;
                if exact {
                    let ex = exact_trajectory(&layout, &inputs[0], c)?;
                    artifacts::write_trajectory(&dir.join(format!("trajectory_exact_{name}.csv")), &ex)?;
                    let dev = bloch_deviation(&traj, &ex);
                    worst = worst.max(dev);
                    e.set("max_trajectory_deviation", dev);
                }
                if let Some(c) = c {
                    e.set("controls_hash", artifacts::controls_hash(c));
                }
                runs.insert(name, e.into_value());
            }
            per_seed.insert(seed.to_string(), Value::Object(runs));
        }
        let mut e = Entry::default();
        e.set("per_seed", Value::Object(per_seed)).set("seconds", started.elapsed().as_secs_f64());
        if exact {
            e.set("max_trajectory_deviation", worst);
        } else {
            e.set("note", "exact comparison skipped (chain above analysis.exact_max_spins)");
        }
        self.manifest.set_stage("simulate", e.into_value())
    }

    pub fn infoflow(&mut self) -> AnyResult<()> {
        let started = Instant::now();
        if !self.cfg.analysis.info_flow {
            return self.manifest.set_stage("infoflow", json!({ "note": "disabled" }));
        }
        if self.cfg.model.n() > self.cfg.analysis.exact_max_spins {
            let note = "skipped: chain above analysis.exact_max_spins";
            return self.manifest.set_stage("infoflow", json!({ "note": note }));
        }
        let source = match self.cfg.task {
            TaskConfig::Transfer { bob, .. } => bob,
            _ => self.cfg.model.target(),
        };
        let init = self.cfg.initial_states();
        let mut per_seed = serde_json::Map::new();
        let mut maps: std::collections::BTreeMap<String, Vec<InfoFlowMap>> = Default::default();
        for seed in self.seeds() {
            let layout = self.layout(seed)?;
            let dir = seed_dir(&self.out, seed);
            let mut runs = serde_json::Map::new();
            for (name, controls) in self.protocols(seed)? {
                let map = exactsim::info_flow(&layout, &init, source, controls.as_ref(), &SimConfig::default())?;
                let hash = controls.as_ref().map(artifacts::controls_hash);
                write_info_flow(&dir, &format!("infoflow_{name}"), &map, hash.as_deref())?;
                let final_self = *map.self_information().last().unwrap();
                let target_final = map.values.last().unwrap()[self.cfg.model.target()];
                runs.insert(name.clone(), json!({ "final_self_information": final_self, "final_target_information": target_final }));
                maps.entry(name).or_default().push(map);
            }
            per_seed.insert(seed.to_string(), Value::Object(runs));
        }
        let mut means = serde_json::Map::new();
        if self.seeds().len() > 1 {
            for (name, list) in &maps {
                if list.len() != self.seeds().len() {
                    continue;
                }
                let seeds = self.seeds();
                let avg = exactsim::disorder_average(&seeds, |s| {
                    let i = seeds.iter().position(|&x| x == s).expect("seed in list");
                    Ok(list[i].clone())
                })?;
                write_info_flow(&self.out, &format!("infoflow_mean_{name}"), &avg.mean, None)?;
                means.insert(name.clone(), json!({ "final_self_information": avg.mean_self_information().last() }));
            }
        }
        let mut e = Entry::default();
        e.set("source_spin", source)
            .set("per_seed", Value::Object(per_seed))
            .set("mean", Value::Object(means))
            .set("seconds", started.elapsed().as_secs_f64());
        self.manifest.set_stage("infoflow", e.into_value())
    }
}

fn exact_trajectory(layout: &CircuitLayout, init: &[[C64; 2]], c: Option<&ControlSequence>) -> AnyResult<Trajectory> {
    let psi0 = models::product_state_from(init)?;
    Ok(exactsim::target_trajectory(layout, &psi0, c, &SimConfig::default())?)
}

fn bloch_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    a.bloch()
        .iter()
        .zip(b.bloch())
        .flat_map(|(x, y)| (0..3).map(move |i| (x[i] - y[i]).abs()))
        .fold(0.0, f64::max)
}

fn write_ranks(path: &Path, rom: &ReducedOrderModel, n: usize, cone: Option<&exactsim::LightCone>) -> AnyResult<()> {
    let dims = rom.eff_dims();
    let ranks = rom.ranks();
    let rows = ranks.iter().zip(&dims).enumerate().map(|(k, ((rl, rr), d))| {
        let mut row = vec![k.to_string(), rl.to_string(), rr.to_string(), d.to_string(), (1u64 << n).to_string()];
        row.push(cone.and_then(|c| c.bound.get(k)).map_or(String::new(), |b| format!("{b}")));
        row
    });
    write_csv(path, &["k", "r_left", "r_right", "d_eff", "full_dim", "light_cone_bound"], rows)
}

fn write_info_flow(dir: &Path, stem: &str, map: &InfoFlowMap, hash: Option<&str>) -> AnyResult<()> {
    let header: Vec<String> = std::iter::once("k".to_owned()).chain((0..map.n()).map(|m| format!("m{m}"))).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = map.values.iter().enumerate().map(|(k, row)| std::iter::once(k.to_string()).chain(row.iter().map(|v| fmt(*v))).collect());
    write_csv(&dir.join(format!("{stem}.csv")), &header, rows)?;
    let meta = json!({
        "schema_version": artifacts::SCHEMA_VERSION,
        "l": map.l,
        "n": map.n(),
        "N": map.n_steps(),
        "controls_hash": hash,
        "units": "bits",
        "rescaled": false,
    });
    artifacts::write_json(&dir.join(format!("{stem}.json")), &meta)
}

fn write_bloch_points(path: &Path, obj: &Transfer<'_>, optimized: &ControlSequence) -> AnyResult<()> {
    let mut rows = vec![];
    let states = control::tetrahedron_states();
    for (name, c) in [("none", ControlSequence::empty()), ("optimized", optimized.clone())] {
        let finals = obj.final_states(&c)?;
        for (i, (t, rho)) in states.iter().zip(&finals).enumerate() {
            let b = rom::bloch_vector(rho);
            let fid = rom::pure_fidelity(&t.psi, rho);
            rows.push(vec![
                name.to_owned(),
                i.to_string(),
                fmt(t.bloch[0]),
                fmt(t.bloch[1]),
                fmt(t.bloch[2]),
                fmt(b[0]),
                fmt(b[1]),
                fmt(b[2]),
                fmt(fid),
            ]);
        }
    }
    write_csv(path, &["protocol", "state", "in_sx", "in_sy", "in_sz", "out_sx", "out_sy", "out_sz", "fidelity"], rows)
}

/// Writes the plot-data bundle of `out` into `out/export`. The bundle is
/// assembled in a scratch directory and moved into place only when
/// complete.
pub fn export(out: &Path) -> AnyResult<PathBuf> {
    let manifest_path = out.join(artifacts::MANIFEST);
    artifacts::require(&manifest_path)?;
    let manifest = artifacts::read_json(&manifest_path)?;
    let seeds: Vec<u64> = serde_json::from_value(manifest["seeds"].clone())?;
    let disordered = manifest["config"]["model"]["kind"] == "mbl";
    let seeds = if disordered { seeds } else { seeds[..1].to_vec() };

    let scratch = out.join(".export.partial");
    if scratch.exists() {
        std::fs::remove_dir_all(&scratch)?;
    }
    std::fs::create_dir_all(&scratch)?;
    let result = (|| -> AnyResult<()> {
        let mut traj_rows = vec![];
        let mut rank_rows = vec![];
        let mut bloch_rows = vec![];
        let mut heatmaps = vec![];
        for &seed in &seeds {
            let dir = seed_dir(out, seed);
            artifacts::require(&dir)?;
            let (_, ranks) = artifacts::read_csv(&dir.join("ranks.csv"))?;
            rank_rows.extend(ranks.into_iter().map(|r| std::iter::once(seed.to_string()).chain(r).collect::<Vec<_>>()));
            for entry in sorted_entries(&dir)? {
                let name = entry.file_name().unwrap().to_string_lossy().to_string();
                if let Some(rest) = name.strip_prefix("trajectory_").and_then(|s| s.strip_suffix(".csv")) {
                    let (source, protocol) = rest.split_once('_').ok_or("malformed trajectory file name")?;
                    let (_, rows) = artifacts::read_csv(&entry)?;
                    for r in rows {
                        traj_rows.push([vec![seed.to_string(), protocol.to_owned(), source.to_owned()], r].concat());
                    }
                } else if let Some(stem) = name.strip_prefix("infoflow_").and_then(|s| s.strip_suffix(".csv")) {
                    heatmaps.push((format!("heatmap_seed{seed}_{stem}"), entry.clone()));
                } else if name == "bloch_points.csv" {
                    let (_, rows) = artifacts::read_csv(&entry)?;
                    bloch_rows.extend(rows.into_iter().map(|r| std::iter::once(seed.to_string()).chain(r).collect::<Vec<_>>()));
                }
            }
        }
        for entry in sorted_entries(out)? {
            let name = entry.file_name().unwrap().to_string_lossy().to_string();
            if let Some(stem) = name.strip_prefix("infoflow_mean_").and_then(|s| s.strip_suffix(".csv")) {
                heatmaps.push((format!("heatmap_mean_{stem}"), entry.clone()));
            }
        }
        if traj_rows.is_empty() && heatmaps.is_empty() && bloch_rows.is_empty() {
            return Err(format!("no plot data in {}; run simulate, optimize or infoflow first", out.display()).into());
        }
        write_csv(&scratch.join("ranks.csv"), &["seed", "k", "r_left", "r_right", "d_eff", "full_dim", "light_cone_bound"], rank_rows)?;
        if !traj_rows.is_empty() {
            let header = ["seed", "protocol", "source", "k", "sx", "sy", "sz", "purity"];
            write_csv(&scratch.join("trajectories.csv"), &header, traj_rows)?;
        }
        if !bloch_rows.is_empty() {
            let header = ["seed", "protocol", "state", "in_sx", "in_sy", "in_sz", "out_sx", "out_sy", "out_sz", "fidelity"];
            write_csv(&scratch.join("bloch_points.csv"), &header, bloch_rows)?;
        }
        for (stem, src) in &heatmaps {
            let (header, rows) = artifacts::read_csv(src)?;
            let rescaled = rows.into_iter().map(|r| {
                let mut it = r.into_iter();
                let k = it.next().unwrap_or_default();
                std::iter::once(Ok(k)).chain(it.map(|v| v.parse::<f64>().map(|x| fmt((x + 1e-2).ln())))).collect::<Result<Vec<_>, _>>()
            });
            let rows = rescaled.collect::<Result<Vec<_>, _>>()?;
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(&scratch.join(format!("{stem}.csv")), &header, rows)?;
            let mut meta = artifacts::read_json(&src.with_extension("json"))?;
            meta["rescaled"] = json!(true);
            meta["transform"] = json!("ln(I + 0.01)");
            artifacts::write_json(&scratch.join(format!("{stem}.json")), &meta)?;
        }
        let index = json!({
            "schema_version": artifacts::SCHEMA_VERSION,
            "source": out.display().to_string(),
            "seeds": seeds,
            "heatmaps": heatmaps.iter().map(|(s, _)| s.clone()).collect::<Vec<_>>(),
        });
        artifacts::write_json(&scratch.join("index.json"), &index)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_dir_all(&scratch);
        return Err(e);
    }
    let target = out.join("export");
    if target.exists() {
        std::fs::remove_dir_all(&target)?;
    }
    std::fs::rename(&scratch, &target)?;
    Ok(target)
}

fn sorted_entries(dir: &Path) -> AnyResult<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}
