use std::path::{Path, PathBuf};

use dsdiff_core::data::{
    csv_ingest, load_checkpoint, load_dataset, save_checkpoint, save_dataset, sine_generate, Checkpoint, CsvOptions,
    DatasetFile,
};
use dsdiff_core::evaluation::{evaluate, pca_project, MetricReport};
use dsdiff_core::guidance::{sample_guided, sample_unguided_series, train_guidance, Part, StyleLibrary};
use dsdiff_core::backbone::train_backbone;
use dsdiff_core::{Error, Result, SeriesWindow};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Settings;
use crate::provenance::Record;
use crate::{Command, Common};

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Refuses to write over any input file.
fn guard(outputs: &[&Path], inputs: &[&Path]) -> Result<()> {
    for out in outputs {
        let Ok(o) = out.canonicalize() else { continue };
        for inp in inputs {
            if inp.canonicalize().is_ok_and(|i| i == o) {
                return Err(Error::Validation(format!("output {} would overwrite an input", out.display())));
            }
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn load_windows(path: &Path) -> Result<DatasetFile> {
    load_dataset(path)
}

fn shape(windows: &[SeriesWindow]) -> (usize, usize) {
    (windows[0].len(), windows[0].features())
}

fn rng(settings: &Settings) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(settings.seed)
}

pub fn run(common: &Common, command: Command, argv: &[String]) -> Result<()> {
    let mut s = Settings::load(common.config.as_deref())?;
    set(&mut s.seed, common.seed);
    set(&mut s.output_dir, common.output_dir.clone());
    let dir = s.output_dir.clone();
    let default = |name: &str| dir.join(name);

    let (name, inputs, outputs): (&str, Vec<PathBuf>, Vec<PathBuf>) = match command {
        Command::GenData {
            samples,
            length,
            features,
            out,
        } => {
            set(&mut s.data.samples, samples);
            set(&mut s.data.length, length);
            set(&mut s.data.features, features);
            let out = out.unwrap_or_else(|| default("sine.dsds"));
            prepare(&s)?;
            let d = &s.data;
            let windows = sine_generate(d.samples, d.length, d.features, &mut rng(&s))?;
            save_dataset(&out, &DatasetFile { windows, normalization: None })?;
            println!("wrote {} sine windows to {}", d.samples, out.display());
            ("gen-data", vec![], vec![out])
        }
        Command::Ingest {
            input,
            delimiter,
            length,
            stride,
            columns,
            out,
        } => {
            set(&mut s.data.delimiter, delimiter.map(String::from));
            set(&mut s.data.length, length);
            set(&mut s.data.stride, stride);
            if columns.is_some() {
                s.data.columns = columns;
            }
            let out = out.unwrap_or_else(|| default("ingested.dsds"));
            prepare(&s)?;
            guard(&[&out], &[&input])?;
            let opts = CsvOptions {
                delimiter: s.delimiter()?,
                window_len: s.data.length,
                stride: s.data.stride,
                feature_columns: s.data.columns.clone(),
            };
            let (windows, norm) = csv_ingest(&input, &opts)?;
            let n = windows.len();
            save_dataset(&out, &DatasetFile { windows, normalization: Some(norm) })?;
            println!("wrote {n} windows to {}", out.display());
            ("ingest", vec![input], vec![out])
        }
        Command::TrainBackbone {
            data,
            epochs,
            batch_size,
            learning_rate,
            base_channels,
            out,
        } => {
            set(&mut s.backbone.epochs, epochs);
            set(&mut s.backbone.batch_size, batch_size);
            set(&mut s.backbone.learning_rate, learning_rate);
            set(&mut s.backbone.base_channels, base_channels);
            let out = out.unwrap_or_else(|| default("backbone.dsdf"));
            let history_path = default("backbone_loss.csv");
            prepare(&s)?;
            guard(&[&out, &history_path], &[&data])?;
            let windows = load_windows(&data)?.windows;
            let (_, f) = shape(&windows);
            let (den, history) =
                train_backbone(&windows, &s.transform(), s.denoiser(f), &s.backbone_training(), &mut rng(&s))?;
            save_checkpoint(&out, &Checkpoint::backbone(&den))?;
            let mut csv = String::from("epoch,loss\n");
            for (i, l) in history.iter().enumerate() {
                csv.push_str(&format!("{},{l}\n", i + 1));
            }
            write_text(&history_path, &csv)?;
            println!("final loss {:.6}; wrote {}", history.last().copied().unwrap_or(f64::NAN), out.display());
            ("train-backbone", vec![data], vec![out, history_path])
        }
        Command::TrainGuidance {
            data,
            backbone,
            epochs,
            batch_size,
            learning_rate,
            trend_out,
            seasonal_out,
        } => {
            set(&mut s.guidance.epochs, epochs);
            set(&mut s.guidance.batch_size, batch_size);
            set(&mut s.guidance.learning_rate, learning_rate);
            let trend_out = trend_out.unwrap_or_else(|| default("guidance_trend.dsdf"));
            let seasonal_out = seasonal_out.unwrap_or_else(|| default("guidance_seasonal.dsdf"));
            let history_path = default("guidance_loss.csv");
            prepare(&s)?;
            guard(&[&trend_out, &seasonal_out, &history_path], &[&data, &backbone])?;
            let windows = load_windows(&data)?.windows;
            let (l, f) = shape(&windows);
            let den = load_checkpoint(&backbone)?.into_backbone()?;
            let m = train_guidance(
                &windows,
                &den,
                &s.kernel(),
                &s.guidance_net(f, l),
                &s.guidance_training(),
                &mut rng(&s),
            )?;
            save_checkpoint(&trend_out, &Checkpoint::guidance(&m.trend, Part::Trend))?;
            save_checkpoint(&seasonal_out, &Checkpoint::guidance(&m.seasonal, Part::Seasonal))?;
            let mut csv = String::from("epoch,trend,seasonal\n");
            for (i, (a, b)) in m.trend_history.iter().zip(&m.seasonal_history).enumerate() {
                csv.push_str(&format!("{},{a},{b}\n", i + 1));
            }
            write_text(&history_path, &csv)?;
            println!("wrote {} and {}", trend_out.display(), seasonal_out.display());
            ("train-guidance", vec![data, backbone], vec![trend_out, seasonal_out, history_path])
        }
        Command::Generate {
            backbone,
            trend,
            seasonal,
            data,
            guided,
            unguided,
            style_index,
            count,
            out,
        } => {
            if guided || unguided {
                s.sampling.guided = guided;
            }
            if style_index.is_some() {
                s.sampling.style_index = style_index;
            }
            set(&mut s.sampling.count, count);
            let out = out.unwrap_or_else(|| default("generated.dsds"));
            let sidecar = out.with_extension("styles.csv");
            prepare(&s)?;
            let den = load_checkpoint(&backbone)?.into_backbone()?;
            let source = data.as_deref().map(load_windows).transpose()?;
            let normalization = source.as_ref().and_then(|d| d.normalization.clone());
            let mut inputs = vec![backbone];
            let mut outputs = vec![out.clone()];
            let kernel = s.kernel();
            let mut r = rng(&s);
            let windows = if s.sampling.guided {
                let (Some(trend), Some(seasonal), Some(src), Some(data)) = (trend, seasonal, source, data) else {
                    return Err(Error::Config("guided generation needs --trend, --seasonal and --data".into()));
                };
                guard(&[&out, &sidecar], &[&trend, &seasonal, &data, &inputs[0]])?;
                let t_net = load_checkpoint(&trend)?.into_guidance(Part::Trend)?;
                let s_net = load_checkpoint(&seasonal)?.into_guidance(Part::Seasonal)?;
                let library = StyleLibrary::from_dataset(&src.windows, &kernel.decomposer)?;
                let samples = sample_guided(&den, (&t_net, &s_net), &library, &kernel, s.sampling.count, &mut r)?;
                let mut csv = String::from("sample,style_index,source\n");
                for (i, g) in samples.iter().enumerate() {
                    csv.push_str(&format!("{i},{},{}\n", g.style_index, g.source));
                }
                write_text(&sidecar, &csv)?;
                inputs.extend([trend, seasonal, data]);
                outputs.push(sidecar);
                samples.into_iter().map(|g| g.series).collect()
            } else {
                let len = source.as_ref().map_or(s.data.length, |d| shape(&d.windows).0);
                let mut ins: Vec<&Path> = vec![&inputs[0]];
                ins.extend(data.as_deref());
                guard(&[&out], &ins)?;
                inputs.extend(data);
                sample_unguided_series(&den, &kernel, len, s.sampling.count, &mut r)?
            };
            save_dataset(&out, &DatasetFile { windows, normalization })?;
            println!(
                "wrote {} {} windows to {}",
                s.sampling.count,
                if s.sampling.guided { "guided" } else { "unguided" },
                out.display()
            );
            ("generate", inputs, outputs)
        }
        Command::Evaluate {
            real,
            generated,
            replicates,
            iterations,
            out,
        } => {
            set(&mut s.evaluation.replicates, replicates);
            set(&mut s.evaluation.iterations, iterations);
            let out = out.unwrap_or_else(|| default("metrics.txt"));
            prepare(&s)?;
            guard(&[&out], &[&real, &generated])?;
            let (r, g) = (load_windows(&real)?.windows, load_windows(&generated)?.windows);
            let report = evaluate(&r, &g, &s.eval_config(), s.seed)?;
            write_text(&out, &report.to_key_value())?;
            println!("{}\n{}", MetricReport::table_header(), report.table_row());
            ("evaluate", vec![real, generated], vec![out])
        }
        Command::ExportPlots { real, generated, out } => {
            let out = out.unwrap_or_else(|| default("pca.csv"));
            prepare(&s)?;
            guard(&[&out], &[&real, &generated])?;
            let (r, g) = (load_windows(&real)?.windows, load_windows(&generated)?.windows);
            let p = pca_project(&r, &g)?;
            write_text(&out, &p.to_delimited())?;
            println!(
                "explained variance ratio {:.4}, {:.4}; wrote {}",
                p.explained_ratio[0],
                p.explained_ratio[1],
                out.display()
            );
            ("export-plots", vec![real, generated], vec![out])
        }
    };

    Record {
        command: name,
        argv,
        settings: &s,
        inputs,
        outputs,
    }
    .append()?;
    eprintln!("{name}: seed {} config {}", s.seed, &s.hash()[..12]);
    Ok(())
}

/// Validates the final settings and creates the output directory.
fn prepare(s: &Settings) -> Result<()> {
    s.validate()?;
    std::fs::create_dir_all(&s.output_dir)?;
    Ok(())
}
