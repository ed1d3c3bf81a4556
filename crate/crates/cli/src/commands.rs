use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mvrs_core::catalog::read_catalog;
use mvrs_core::pipeline::{insert_prepared, prepare_video};
use mvrs_core::preprocess::normalize_orientation;
use mvrs_core::refseg::{
    default_boundary_radius, explain_video, iou, j_and_f, BinaryMaskVolume, MaskArtifact,
    StubPredictor,
};
use mvrs_core::{
    Embedder, EmbedderConfig, Engine, MetadataFilter, QueryRequest, SearchMode, VectorIndex,
};

use crate::layout::{read_frame_dir, settings, CatalogRow, Loaded};
use crate::{EvalSegArgs, ExplainArgs, IngestArgs, Internal, SearchArgs};

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let cfg = settings(args.config.as_deref())?;
    let file = File::open(&args.catalog)
        .with_context(|| format!("cannot open catalog {}", args.catalog.display()))?;
    let assets = read_catalog(BufReader::new(file))
        .with_context(|| format!("in catalog {}", args.catalog.display()))?;
    if assets.is_empty() {
        bail!("catalog {} lists no videos", args.catalog.display());
    }
    let embedder = Embedder::new(cfg.embedder.clone())?;

    let mut store = if args.append {
        Loaded::open(&args.index, Some(cfg.ann))?
    } else {
        Loaded {
            index: VectorIndex::new(cfg.embedder.dim, cfg.ann)?,
            rows: Vec::new(),
        }
    };
    let mut seen: HashSet<String> = store
        .rows
        .iter()
        .map(|r| r.asset.video_id.clone())
        .collect();
    let mut report = Vec::new();
    let mut failed = 0;
    for asset in assets {
        let id = asset.video_id.clone();
        let dir = args.frames.join(&id);
        let result = (|| -> Result<usize> {
            if !seen.insert(id.clone()) {
                bail!("duplicate video_id");
            }
            let frames = read_frame_dir(&dir)?;
            let prepared = prepare_video(&asset, frames, &embedder, &cfg.preprocess, |_| {})?;
            insert_prepared(&mut store.index, &prepared)?;
            log::info!("{id}: {} frames dropped as blurry", prepared.dropped.len());
            Ok(prepared.groups.len())
        })();
        match result {
            Ok(n) => {
                report.push(format!("{id}\t{n}"));
                let frames_dir = std::fs::canonicalize(&dir).unwrap_or(dir);
                store.rows.push(CatalogRow { asset, frames_dir });
            }
            Err(e) => {
                eprintln!("error: video {id}: {e:#}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} video(s) failed; index not written");
    }
    store.save(&args.index)?;
    let mut out = std::io::stdout().lock();
    for line in report {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// The embedder for an existing index: the configured one when a config is
/// given, otherwise the deterministic embedder at the index's width.
fn query_embedder(config: Option<&Path>, index: &VectorIndex) -> Result<Embedder> {
    let ec = match config {
        Some(p) => settings(Some(p))?.embedder,
        None => EmbedderConfig::deterministic(index.dim()),
    };
    if ec.dim != index.dim() {
        bail!(
            "embedder dim {} does not match index dim {}",
            ec.dim,
            index.dim()
        );
    }
    Ok(Embedder::new(ec)?)
}

pub fn search(args: &SearchArgs) -> Result<()> {
    let cfg = settings(args.config.as_deref())?;
    let store = Loaded::open(&args.index, args.ann.then_some(cfg.ann))?;
    let embedder = query_embedder(args.config.as_deref(), &store.index)?;
    let filter = MetadataFilter {
        location_equals: args.location.clone(),
        time_range: (args.from.is_some() || args.to.is_some()).then(|| {
            (
                args.from
                    .unwrap_or(chrono::DateTime::<chrono::Utc>::MIN_UTC),
                args.to.unwrap_or(chrono::DateTime::<chrono::Utc>::MAX_UTC),
            )
        }),
        depth_range: (args.depth_min.is_some() || args.depth_max.is_some()).then(|| {
            (
                args.depth_min.unwrap_or(f64::NEG_INFINITY),
                args.depth_max.unwrap_or(f64::INFINITY),
            )
        }),
        species_any: (!args.species.is_empty()).then(|| args.species.iter().cloned().collect()),
        behavior_any: (!args.behavior.is_empty()).then(|| args.behavior.iter().cloned().collect()),
    };
    let req = QueryRequest {
        filter: (!filter.is_empty()).then_some(filter),
        ..QueryRequest::new(args.query.clone(), args.k)
    };
    let catalog = store.catalog();
    let engine = Engine {
        index: &store.index,
        embedder: &embedder,
        catalog: &catalog,
        mode: if args.ann {
            SearchMode::Ann(cfg.ann)
        } else {
            SearchMode::Exact
        },
    };
    let results = engine.run_query(&req)?;

    let mut out = BufWriter::new(std::io::stdout().lock());
    for r in results {
        writeln!(
            out,
            "{}\t{:.6}\t{}\t{:.3}",
            r.rank, r.score, r.video_id, r.best_timestamp_s
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let store = Loaded::open(&args.index, None)?;
    let row = store
        .rows
        .iter()
        .find(|r| r.asset.video_id == args.video)
        .ok_or_else(|| anyhow!("video {} is not in {}", args.video, args.index.display()))?;
    let frames: Vec<_> = read_frame_dir(&row.frames_dir)?
        .iter()
        .map(|f| normalize_orientation(f, &row.asset.metadata))
        .collect();
    let predictor = StubPredictor::new(store.index.dim());
    let ex = explain_video(&predictor, &frames, &args.query, args.chunk)?;
    let artifact = MaskArtifact::new(&args.video, &args.query, &ex);

    let file = File::create(&args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &artifact).context(Internal)?;
    w.flush()
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(())
}

fn read_artifact(path: &Path) -> Result<MaskArtifact> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("{} is not a mask artifact", path.display()))
}

pub fn eval_seg(args: &EvalSegArgs) -> Result<()> {
    let pred = read_artifact(&args.pred)?;
    let gt = read_artifact(&args.gt)?;
    if (pred.h, pred.w, pred.frames.len()) != (gt.h, gt.w, gt.frames.len()) {
        bail!(
            "shape mismatch: prediction is {}x{}x{}, ground truth is {}x{}x{}",
            pred.frames.len(),
            pred.h,
            pred.w,
            gt.frames.len(),
            gt.h,
            gt.w
        );
    }
    let p = pred
        .decode()
        .with_context(|| format!("in {}", args.pred.display()))?;
    let g = gt
        .decode()
        .with_context(|| format!("in {}", args.gt.display()))?;
    let overall = iou(
        &BinaryMaskVolume::from_frames(&p)?,
        &BinaryMaskVolume::from_frames(&g)?,
    )?;
    let jf = j_and_f(&p, &g, default_boundary_radius(gt.h, gt.w))?;
    println!("IoU\t{overall:.4}");
    println!("J\t{:.4}", jf.j);
    println!("F\t{:.4}", jf.f);
    println!("J&F\t{:.4}", jf.jf);
    Ok(())
}
