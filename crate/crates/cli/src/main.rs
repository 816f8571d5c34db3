//! `lgk` — command-line front end for the lane-graph toolkit.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lgk_core::aggregate::{aggregate, default_pre_transform, AggregationOp, PreTransform};
use lgk_core::bev::{crop_mask_to_target, crop_to_target, warp_frame, BevGrid};
use lgk_core::camera::{relative_pose, CameraRig};
use lgk_core::io::{self, BevSidecar, FormatError, Tensor};
use lgk_core::lane_graph::{LaneGraph, Point, DEFAULT_CONNECT_TOL, DEFAULT_POLYLINE_POINTS};
use lgk_core::metrics::{evaluate, DEFAULT_MATCH_DIST};
use lgk_core::postmerge::{post_merge, FrameEstimate, MergeParams};
use lgk_core::stetr::{flatten_with_embeddings, EmbeddingConfig};
use lgk_core::synthetic::{
    generate_scene, render_ground_pattern, simulate_frame_estimates, Layout, NoiseParams, TrajectoryParams,
    DEFAULT_IMAGE_DIMS, MIN_VISIBLE_LENGTH,
};
use lgk_core::tensor::FeatureMap;

#[derive(Parser)]
#[command(name = "lgk", version, about = "Lane-graph extraction toolkit")]
#[command(after_help = "Coordinates are ego-frame meters: x right, z forward, y down.\n\
                        LGK_THREADS caps worker threads (0 or unset = one per core).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene bundle: rigs, images, estimates, ground truth.
    Synth(SynthArgs),
    /// Warp a perspective feature map onto the reference BEV grid.
    Warp(WarpArgs),
    /// Aggregate warped frames and crop to the target window.
    Aggregate(AggregateArgs),
    /// Merge per-frame lane-graph estimates into the reference frame.
    Postmerge(PostmergeArgs),
    /// Score a predicted lane graph against ground truth.
    Eval(EvalArgs),
    /// Flatten feature maps into tokens with spatiotemporal embeddings.
    Embed(EmbedArgs),
    /// Draw one or more lane graphs as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Random seed (unitless).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Road layout: straight, merge or intersection.
    #[arg(long, default_value = "straight")]
    layout: Layout,
    /// Number of parallel lanes (count).
    #[arg(long, default_value_t = 2)]
    lanes: usize,
    /// Number of frames (count).
    #[arg(long, default_value_t = 3)]
    frames: usize,
    /// Time between frames (seconds).
    #[arg(long, default_value_t = 2.0)]
    dt: f64,
    /// Reference frame index (count from 0); defaults to the middle frame.
    #[arg(long)]
    reference: Option<usize>,
    /// Gaussian jitter on estimate control points (meters).
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Chance a visible centerline is split into fragments (probability 0..1).
    #[arg(long, default_value_t = 0.0)]
    noise_fragment: f64,
    /// Chance a visible centerline is missed (probability 0..1).
    #[arg(long, default_value_t = 0.0)]
    noise_dropout: f64,
    /// Expected spurious centerlines per frame (count).
    #[arg(long, default_value_t = 0.0)]
    noise_false_positives: f64,
    /// Gaussian noise on the existence logit (logit units).
    #[arg(long, default_value_t = 0.0)]
    noise_prob_sigma: f64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// Target window left edge (meters).
    #[arg(long, default_value_t = -25.0, allow_negative_numbers = true)]
    x_min: f64,
    /// Target window right edge (meters).
    #[arg(long, default_value_t = 25.0, allow_negative_numbers = true)]
    x_max: f64,
    /// Target window near edge (meters).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    z_min: f64,
    /// Target window far edge (meters).
    #[arg(long, default_value_t = 50.0, allow_negative_numbers = true)]
    z_max: f64,
    /// BEV cell size (meters per cell).
    #[arg(long, default_value_t = 0.25)]
    resolution: f64,
    /// Margin around the target window warped but later cropped (meters).
    #[arg(long, default_value_t = 12.0)]
    fov_margin: f64,
}

impl GridArgs {
    fn grid(&self) -> Result<BevGrid, CliError> {
        let g = BevGrid {
            x_min: self.x_min,
            x_max: self.x_max,
            z_min: self.z_min,
            z_max: self.z_max,
            resolution: self.resolution,
            fov_margin: self.fov_margin,
        };
        g.validate().map_err(|e| CliError::usage(format!("grid flags: {e}")))?;
        Ok(g)
    }
}

#[derive(Args)]
struct WarpArgs {
    /// Perspective feature map, H×W×C tensor file.
    #[arg(long)]
    image: PathBuf,
    /// Rig JSON of the frame that produced --image.
    #[arg(long)]
    rig: PathBuf,
    /// Rig JSON of the reference frame.
    #[arg(long)]
    ref_rig: PathBuf,
    /// Frame offset from the reference (frames, signed).
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    relative_time: i32,
    #[command(flatten)]
    grid: GridArgs,
    /// Output tensor file; the validity mask goes to the same path with a .json extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    /// Warped frames (tensor files with .json sidecars), comma-separated or repeated.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    frames: Vec<PathBuf>,
    /// Per-cell reduction: max or mean.
    #[arg(long, default_value = "max")]
    op: AggregationOp,
    /// Seed of the residual pre-transform (unitless); omit for none.
    #[arg(long)]
    seed: Option<u64>,
    /// Output tensor file cropped to the target window; coverage goes to the .json sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PostmergeArgs {
    /// Estimate JSON files, comma-separated or repeated.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    estimates: Vec<PathBuf>,
    /// Index of the reference estimate within --estimates (count from 0).
    #[arg(long = "ref", default_value_t = 0)]
    reference: usize,
    /// Rig JSON per estimate. When given, estimates are taken to be in their
    /// own ego frames and are moved into the reference frame and clipped to
    /// the default target window first.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    rigs: Vec<PathBuf>,
    /// Minimum existence probability (probability 0..1).
    #[arg(long, default_value_t = 0.5)]
    prob_thresh: f64,
    /// Minimum dot product of unit directions (cosine, -1..1).
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    dir_thresh: f64,
    /// Point match distance (meters).
    #[arg(long, default_value_t = 2.0)]
    dist_thresh: f64,
    /// End-to-start gap that counts as a connection (meters).
    #[arg(long, default_value_t = DEFAULT_CONNECT_TOL)]
    connect_tol: f64,
    /// Output graph JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted graph JSON.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth graph JSON.
    #[arg(long)]
    gt: PathBuf,
    /// Match distance (meters).
    #[arg(long, default_value_t = DEFAULT_MATCH_DIST)]
    match_dist: f64,
    /// Report JSON path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Number of frames (count).
    #[arg(long)]
    n: usize,
    /// Feature map rows (cells).
    #[arg(long)]
    x: usize,
    /// Feature map columns (cells).
    #[arg(long)]
    y: usize,
    /// Channels per token (count, multiple of 4).
    #[arg(long)]
    f: usize,
    /// Frame offsets from the reference (frames, signed); defaults to centered.
    #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
    offsets: Vec<i32>,
    /// X×Y×F feature tensors, one per frame; zeros when omitted.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    /// Output (N·X·Y)×F token tensor; provenance goes to the .json sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Graph JSON files, comma-separated or repeated; drawn in distinct colors.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    graph: Vec<PathBuf>,
    /// Drawing width (pixels).
    #[arg(long, default_value_t = 600)]
    width: u32,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Io(m) => f.write_str(m),
        }
    }
}

fn invalid(what: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{what}: {e}"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_file<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T, FormatError>) -> Result<T, CliError> {
    parse(&read_text(path)?).map_err(|e| invalid(path.display(), e))
}

fn read_feature_map(path: &Path) -> Result<FeatureMap, CliError> {
    io::decode_feature_map(&read_bytes(path)?).map_err(|e| invalid(path.display(), e))
}

/// Writes via a temporary file in the destination directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    // Temp files are created private; outputs get ordinary permissions.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(io_err)?;
    }
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

// ---------------------------------------------------------------------------

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let scene = generate_scene(a.seed, a.layout, a.lanes, TrajectoryParams { frames: a.frames, dt: a.dt })
        .map_err(|e| invalid("--lanes/--frames/--dt", e))?;
    let reference = a.reference.unwrap_or(a.frames / 2);
    if reference >= a.frames {
        return Err(CliError::usage(format!("--reference {reference} is outside {} frames", a.frames)));
    }
    let noise = NoiseParams {
        control_point_sigma: a.noise_sigma,
        fragment_probability: a.noise_fragment,
        dropout_probability: a.noise_dropout,
        false_positive_rate: a.noise_false_positives,
        prob_noise_sigma: a.noise_prob_sigma,
    };
    let grid = BevGrid::default();
    let frames: Vec<usize> = (0..a.frames).collect();
    let estimates = simulate_frame_estimates(&scene, &frames, reference, &grid, &noise, a.seed)
        .map_err(|e| invalid("--noise-*", e))?;

    fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    write_atomic(&a.out.join("scene.json"), io::scene_to_json(&scene).as_bytes())?;
    let gt = scene.gt_in_frame(reference, &grid.target_window());
    write_atomic(&a.out.join("gt.json"), io::graph_to_json(&gt).as_bytes())?;
    for (n, estimate) in frames.iter().zip(&estimates) {
        let rig = scene.rig_at(*n);
        write_atomic(&a.out.join(format!("rig_{n}.json")), io::rig_to_json(&rig).as_bytes())?;
        write_atomic(&a.out.join(format!("estimate_{n}.json")), io::estimate_to_json(estimate).as_bytes())?;
        let image = lane_proximity_image(&scene.gt_graph, &rig).map_err(|e| invalid("render", e))?;
        write_atomic(&a.out.join(format!("image_{n}.lgkt")), &io::encode_feature_map(&image))?;
    }
    Ok(())
}

/// One-channel image that peaks on the lane centerlines.
fn lane_proximity_image(graph: &LaneGraph, rig: &CameraRig) -> lgk_core::Result<FeatureMap> {
    let ego_from_global = rig.ego_pose.inverse();
    let local = graph.map_points(|p| lgk_core::camera::transform_ground_point(&ego_from_global, p));
    let polylines = local.polylines(DEFAULT_POLYLINE_POINTS)?;
    render_ground_pattern(
        |x, z| {
            let p = Point::new(x, z);
            let d = polylines.iter().map(|pl| pl.min_distance_to(&p)).fold(f64::INFINITY, f64::min);
            (-(d * d) / (2.0 * 0.5 * 0.5)).exp()
        },
        rig,
        DEFAULT_IMAGE_DIMS,
    )
}

fn warp(a: &WarpArgs) -> Result<(), CliError> {
    let grid = a.grid.grid()?;
    let image = read_feature_map(&a.image)?;
    let rig = parse_file(&a.rig, io::rig_from_json)?;
    let ref_rig = parse_file(&a.ref_rig, io::rig_from_json)?;
    let warped = warp_frame(&image, &rig, &ref_rig, &grid, a.relative_time).map_err(|e| invalid("--image", e))?;
    let sidecar = BevSidecar {
        relative_time: a.relative_time,
        grid,
        frame_count: 1,
        mask: warped.mask,
    };
    write_atomic(&a.out, &io::encode_feature_map(&warped.features))?;
    write_atomic(&sidecar_path(&a.out), io::sidecar_to_json(&sidecar).as_bytes())
}

fn aggregate_cmd(a: &AggregateArgs) -> Result<(), CliError> {
    let mut frames = Vec::with_capacity(a.frames.len());
    let mut grid: Option<BevGrid> = None;
    for path in &a.frames {
        let features = read_feature_map(path)?;
        let side = sidecar_path(path);
        let sidecar = parse_file(&side, io::sidecar_from_json)?;
        match grid {
            None => grid = Some(sidecar.grid),
            Some(g) if g != sidecar.grid => {
                return Err(CliError::usage(format!("{}: grid differs from the first frame's", side.display())));
            }
            Some(_) => {}
        }
        frames.push(io::warped_frame_from_parts(features, sidecar).map_err(|e| invalid(path.display(), e))?);
    }
    let grid = grid.expect("at least one frame");
    let channels = frames[0].features.channels();
    let pre = match a.seed {
        Some(seed) => default_pre_transform(Some(seed), channels),
        None => PreTransform::Identity,
    };
    let agg = aggregate(&frames, a.op, &pre).map_err(|e| invalid("--frames", e))?;
    let features = crop_to_target(&agg.features, &grid).map_err(|e| invalid("--frames", e))?;
    let coverage = crop_mask_to_target(&agg.coverage, &grid).map_err(|e| invalid("--frames", e))?;
    // The cropped map is its own grid with no margin.
    let target_grid = BevGrid { fov_margin: 0.0, ..grid };
    let sidecar = BevSidecar {
        relative_time: 0,
        grid: target_grid,
        frame_count: agg.frame_count,
        mask: coverage,
    };
    write_atomic(&a.out, &io::encode_feature_map(&features))?;
    write_atomic(&sidecar_path(&a.out), io::sidecar_to_json(&sidecar).as_bytes())
}

fn postmerge(a: &PostmergeArgs) -> Result<(), CliError> {
    let mut estimates: Vec<FrameEstimate> = a
        .estimates
        .iter()
        .map(|p| parse_file(p, io::estimate_from_json))
        .collect::<Result<_, _>>()?;
    if a.reference >= estimates.len() {
        return Err(CliError::usage(format!(
            "--ref {} is outside the {} estimates",
            a.reference,
            estimates.len()
        )));
    }
    if !a.rigs.is_empty() {
        if a.rigs.len() != estimates.len() {
            return Err(CliError::usage(format!(
                "--rigs has {} files but --estimates has {}",
                a.rigs.len(),
                estimates.len()
            )));
        }
        let rigs: Vec<CameraRig> = a.rigs.iter().map(|p| parse_file(p, io::rig_from_json)).collect::<Result<_, _>>()?;
        let window = BevGrid::default().target_window();
        let reference = rigs[a.reference];
        estimates = estimates
            .iter()
            .zip(&rigs)
            .map(|(e, rig)| e.transformed(&relative_pose(&reference, rig)).clipped(&window, MIN_VISIBLE_LENGTH))
            .collect();
    }
    let params = MergeParams {
        prob_thresh: a.prob_thresh,
        dir_thresh: a.dir_thresh,
        dist_thresh: a.dist_thresh,
    };
    if !(a.connect_tol >= 0.0 && a.connect_tol.is_finite()) {
        return Err(CliError::usage(format!("--connect-tol {} must be >= 0", a.connect_tol)));
    }
    let graph = post_merge(&estimates, a.reference, &params, a.connect_tol)
        .map_err(|e| invalid("--prob-thresh/--dir-thresh/--dist-thresh", e))?;
    write_atomic(&a.out, io::graph_to_json(&graph).as_bytes())
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    if !(a.match_dist > 0.0 && a.match_dist.is_finite()) {
        return Err(CliError::usage(format!("--match-dist {} must be > 0", a.match_dist)));
    }
    let pred = parse_file(&a.pred, io::graph_from_json)?;
    let gt = parse_file(&a.gt, io::graph_from_json)?;
    let report = io::to_json(&evaluate(&pred, &gt, a.match_dist));
    match &a.out {
        Some(path) => write_atomic(path, report.as_bytes()),
        None => {
            println!("{report}");
            Ok(())
        }
    }
}

fn embed(a: &EmbedArgs) -> Result<(), CliError> {
    let cfg = EmbeddingConfig::new(a.f).map_err(|e| invalid("--f", e))?;
    if a.n == 0 || a.x == 0 || a.y == 0 {
        return Err(CliError::usage("--n, --x and --y must be >= 1"));
    }
    let offsets: Vec<i32> = if a.offsets.is_empty() {
        (0..a.n).map(|k| k as i32 - (a.n / 2) as i32).collect()
    } else if a.offsets.len() == a.n {
        a.offsets.clone()
    } else {
        return Err(CliError::usage(format!("--offsets has {} values but --n is {}", a.offsets.len(), a.n)));
    };
    let frames: Vec<FeatureMap> = if a.inputs.is_empty() {
        vec![FeatureMap::zeros(a.x, a.y, a.f); a.n]
    } else if a.inputs.len() == a.n {
        a.inputs.iter().map(|p| read_feature_map(p)).collect::<Result<_, _>>()?
    } else {
        return Err(CliError::usage(format!("--inputs has {} files but --n is {}", a.inputs.len(), a.n)));
    };
    for (path, map) in a.inputs.iter().zip(&frames) {
        if map.dims() != (a.x, a.y, a.f) {
            let (h, w, c) = map.dims();
            return Err(CliError::usage(format!(
                "{}: {h}x{w}x{c} does not match --x {} --y {} --f {}",
                path.display(),
                a.x,
                a.y,
                a.f
            )));
        }
    }
    let seq = flatten_with_embeddings(&frames, &offsets, &cfg).map_err(|e| invalid("--inputs", e))?;
    let tensor = Tensor {
        dims: vec![seq.len() as u32, seq.feature_dim as u32],
        data: seq.tokens.iter().map(|&v| v as f32).collect(),
    };
    write_atomic(&a.out, &io::encode_tensor(&tensor))?;
    write_atomic(&sidecar_path(&a.out), io::provenance_to_json(&seq).as_bytes())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn render(a: &RenderArgs) -> Result<(), CliError> {
    let graphs: Vec<LaneGraph> = a.graph.iter().map(|p| parse_file(p, io::graph_from_json)).collect::<Result<_, _>>()?;
    if a.width < 50 {
        return Err(CliError::usage(format!("--width {} must be >= 50", a.width)));
    }
    let points = graphs.iter().flat_map(|g| g.centerlines.iter().flat_map(|c| c.control_points));
    let (mut lo, mut hi) = (Point::new(-5.0, 0.0), Point::new(5.0, 10.0));
    for p in points {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let pad = 2.0;
    let scale = (a.width as f64 - 2.0 * pad) / (hi.x - lo.x + 2.0 * pad);
    let height = ((hi.y - lo.y + 2.0 * pad) * scale + 2.0 * pad).ceil();
    // Forward (z) points up the page.
    let to_px = |p: &Point| (pad + (p.x - lo.x + pad) * scale, height - pad - (p.y - lo.y + pad) * scale);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height:.0}" viewBox="0 0 {} {height:.0}">"#,
        a.width, a.width
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let arrow = (0.8 * scale).clamp(4.0, 12.0);
    for (k, g) in graphs.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(svg, r#"<g id="graph{k}" stroke="{color}" fill="{color}">"#);
        for c in &g.centerlines {
            let [p0, p1, p2] = c.control_points.map(|p| to_px(&p));
            let _ = writeln!(
                svg,
                r#"<path d="M {:.2} {:.2} Q {:.2} {:.2} {:.2} {:.2}" fill="none" stroke-width="2"/>"#,
                p0.0, p0.1, p1.0, p1.1, p2.0, p2.1
            );
            // Arrowhead along the end tangent.
            let (mut dx, mut dy) = (p2.0 - p1.0, p2.1 - p1.1);
            if dx.hypot(dy) < 1e-9 {
                (dx, dy) = (p2.0 - p0.0, p2.1 - p0.1);
            }
            let n = dx.hypot(dy);
            if n > 1e-9 {
                let (ux, uy) = (dx / n, dy / n);
                let back = (p2.0 - arrow * ux, p2.1 - arrow * uy);
                let (lx, ly) = (back.0 - 0.5 * arrow * uy, back.1 + 0.5 * arrow * ux);
                let (rx, ry) = (back.0 + 0.5 * arrow * uy, back.1 - 0.5 * arrow * ux);
                let _ = writeln!(
                    svg,
                    r#"<polygon points="{:.2},{:.2} {lx:.2},{ly:.2} {rx:.2},{ry:.2}" stroke="none"/>"#,
                    p2.0, p2.1
                );
            }
        }
        for (i, j) in g.edges() {
            let a = to_px(&g.centerlines[i].end());
            let b = to_px(&g.centerlines[j].start());
            let m = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
            let _ = writeln!(svg, r#"<circle class="junction" cx="{:.2}" cy="{:.2}" r="4" stroke="black"/>"#, m.0, m.1);
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    write_atomic(&a.out, svg.as_bytes())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("LGK_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("LGK_THREADS={value:?} is not a non-negative integer")))?;
    // 0 lets rayon pick one thread per core.
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::usage(format!("LGK_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Warp(a) => warp(a),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::Postmerge(a) => postmerge(a),
        Command::Eval(a) => eval(a),
        Command::Embed(a) => embed(a),
        Command::Render(a) => render(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
