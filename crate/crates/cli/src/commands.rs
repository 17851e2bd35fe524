use std::path::{Path, PathBuf};

use hpm_core::eval::{emit_all, run_ablation, AblationModels};
use hpm_core::pipeline::{generate_corpus, Manifest, Split};
use hpm_core::policy::{read_weights, train_with_validation, write_weights, PolicyArchitecture};
use hpm_core::rollout::density::{density_grid, silverman_bandwidth};
use hpm_core::rollout::output::{render_densities, write_forecast, ForecastHeader};
use hpm_core::rollout::{
    forecast_deterministic, marginal_density, rollout_probabilistic, ForecastInput, FvSource, SpatProvider, Variable,
};
use hpm_core::sim::corpus::{read_corpus, write_corpus};
use hpm_core::sim::{snippet_at, Episode};
use hpm_core::{Error, Result, Snippet};
use log::{info, warn};

use crate::config::RunConfig;
use crate::{AblateArgs, ForecastArgs, GenerateArgs, HeadArg, TrainArgs};

pub fn generate(mut cfg: RunConfig, a: GenerateArgs) -> Result<()> {
    if let Some(n) = a.episodes {
        cfg.generator.episodes = n;
    }
    if let Some(s) = a.seed {
        cfg.generator.seed = s;
    }
    cfg.generator.validate()?;
    let episodes = generate_corpus(&cfg.generator)?;
    write_corpus(&a.out, &episodes)?;
    let manifest = Manifest::build(&cfg.generator, &cfg.protocol, &episodes)?;
    manifest.write(&a.out)?;
    info!(
        "wrote {} episodes to {} (config {})",
        episodes.len(),
        a.out.display(),
        manifest.config_hash
    );
    Ok(())
}

fn load_corpus(dir: &Path) -> Result<Vec<Episode>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("corpus directory {} does not exist", dir.display())));
    }
    read_corpus(dir)
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(m) = a.max_samples {
        cfg.train.max_samples = m;
    }
    if let Some(h) = a.hidden {
        cfg.model.hidden = h;
    }
    if let Some(c) = a.components {
        cfg.model.components = c;
    }
    cfg.train.validate()?;
    let n_tau = cfg.protocol.n_tau();
    let arch = match a.head {
        HeadArg::Det => PolicyArchitecture::deterministic(n_tau, cfg.model.hidden, cfg.model.mlp.clone()),
        HeadArg::Mdn => {
            PolicyArchitecture::mixture(n_tau, cfg.model.hidden, cfg.model.mlp.clone(), cfg.model.components)
        }
    };
    arch.validate()?;
    let episodes = load_corpus(&a.corpus)?;
    let p = &cfg.protocol;
    let train = p.training_snippets(&p.select(&episodes, Split::Train))?;
    let val = p.training_snippets(&p.select(&episodes, Split::Val))?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("corpus too small: empty training or validation split".into()));
    }
    info!("training {} model on {} snippets", hpm_core::AblationMode::from(a.mode), train.len());
    let out = train_with_validation(&train, &val, &arch, a.mode.into(), &cfg.train)?;
    write_weights(&a.out, &out.weights)?;
    let log_path = a.log.unwrap_or_else(|| with_suffix(&a.out, ".log"));
    std::fs::write(&log_path, out.log.to_text()).map_err(|e| Error::Io {
        path: log_path.clone(),
        source: e,
    })?;
    if let Some(best) = out.log.best() {
        info!("best epoch {} (validation loss {:.6})", best.epoch, best.val_loss);
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_snippet(a: &ForecastArgs, dt: f64, n_tau: usize) -> Result<Snippet> {
    if let Some(path) = &a.snippet_file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let sn: Snippet = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        sn.validate(n_tau)?;
        return Ok(sn);
    }
    let (Some(corpus), Some(reference)) = (&a.corpus, &a.snippet) else {
        return Err(Error::Config("give --snippet-file or --corpus with --snippet".into()));
    };
    let (ep, step) = reference
        .split_once(':')
        .and_then(|(e, s)| Some((e.parse::<u64>().ok()?, s.parse::<usize>().ok()?)))
        .ok_or_else(|| Error::Config(format!("snippet reference {reference:?} is not episode:step")))?;
    let episodes = load_corpus(corpus)?;
    let episode = episodes
        .iter()
        .find(|e| e.id() == ep)
        .ok_or_else(|| Error::Config(format!("episode {ep} is not in the corpus")))?;
    if !(a.horizon > 0.0) {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let n_fut = (a.horizon / dt).round() as usize;
    snippet_at(episode, step, n_tau, n_fut).map_err(|e| Error::Config(e.to_string()))
}

pub fn forecast(cfg: RunConfig, a: ForecastArgs) -> Result<()> {
    let w = read_weights(&a.weights)?;
    let sn = load_snippet(&a, cfg.protocol.dt, w.arch.history)?;
    let fv_model = a.fv_weights.as_deref().map(read_weights).transpose()?;
    if (fv_model.is_some() || a.oracle_fv) && !w.mode.uses_fv() {
        return Err(Error::Config(format!("a {} model takes no front-vehicle input", w.mode)));
    }
    let fv = match (&fv_model, a.oracle_fv) {
        (Some(m), _) => match FvSource::fv_history(&sn) {
            Some(history) => FvSource::Forecast { weights: m, history },
            None => FvSource::None,
        },
        (None, true) => FvSource::oracle(&sn),
        (None, false) => {
            if w.mode.uses_fv() && sn.history.iter().any(|o| o.context.fv.is_some()) {
                warn!("no front-vehicle source given; forecasting without the front vehicle");
            }
            FvSource::None
        }
    };
    let spat = if w.mode.uses_tl() {
        Some(SpatProvider::from_snippet(&sn)?)
    } else {
        None
    };
    let input = ForecastInput::from_snippet(&sn);
    let seed = a.seed.unwrap_or(cfg.train.seed);
    let samples = a.samples.unwrap_or(if w.is_mixture() { cfg.forecast.samples } else { 1 });
    let header = ForecastHeader {
        seed,
        mode: w.mode,
        samples,
        dt: input.dt,
    };
    if !w.is_mixture() {
        if samples != 1 || a.density {
            return Err(Error::Config("--samples and --density need a mixture model".into()));
        }
        let traj = forecast_deterministic(&w, &input, spat.as_ref(), &fv)?;
        return write_forecast(&a.out, &header, &[traj]);
    }
    let ens = rollout_probabilistic(&w, &input, spat.as_ref(), &fv, samples, seed)?;
    write_forecast(&a.out, &header, &ens.samples)?;
    if a.density {
        if ens.len() < 2 {
            return Err(Error::Config("--density needs at least two samples".into()));
        }
        let mut grids = Vec::with_capacity(input.steps);
        for k in 1..=input.steps {
            let xs = ens.values_at(k, Variable::Position);
            let h = silverman_bandwidth(&xs).unwrap_or(1.0);
            let grid = density_grid(&xs, h, cfg.forecast.density_points.max(2));
            grids.push((grid.clone(), marginal_density(&ens, k, Variable::Position, &grid)?));
        }
        let path = with_suffix(&a.out, ".density.csv");
        std::fs::write(&path, render_densities(input.dt, "position", &grids)).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn ablate(mut cfg: RunConfig, a: AblateArgs) -> Result<()> {
    if let Some(m) = a.max_per_scenario {
        cfg.protocol.max_per_scenario = m;
    }
    if let Some(s) = a.seed {
        cfg.protocol.split_seed = s;
    }
    let models = a.models.iter().map(|p| read_weights(p)).collect::<Result<Vec<_>>>()?;
    let models = AblationModels::from_models(models)?;
    let episodes = load_corpus(&a.corpus)?;
    let p = &cfg.protocol;
    let test = p.eval_snippets(&p.select(&episodes, Split::Test))?;
    info!("evaluating {} test snippets under 4 modes", test.len());
    let report = run_ablation(&models, &test)?;
    emit_all(&report, &a.out)?;
    info!("reports written to {}", a.out.display());
    Ok(())
}
