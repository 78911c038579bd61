//! The consolidation network: hierarchical set-abstraction embedding,
//! r-fold feature expansion, edge-distance head and residual coordinate head.

use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::autograd::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::patching::farthest_point_sampling;
use crate::rng::rng_from;
use crate::spatial::KdTree;

/// Inverse squared-distance weights use this floor so coincident points do
/// not divide by zero.
const INTERP_EPS: f64 = 1e-8;

/// Init gains: relu layers keep activation variance, and the two output
/// layers start small so initial outputs sit close to their source points
/// and initial distances close to `DISTANCE_BIAS`.
const RELU_GAIN: f64 = std::f64::consts::SQRT_2;
const DISTANCE_GAIN: f64 = 0.1;
const RESIDUAL_GAIN: f64 = 0.01;

/// Initial distance output: the middle of the default truncation range, where
/// the regression target still has a gradient.
const DISTANCE_BIAS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Input points per patch; `n_hat / 2` are retained and expanded.
    pub n_hat: usize,
    /// Upsampling rate.
    pub r: usize,
    pub radii: [f64; 4],
    /// Neighbors kept per ball query, nearest first.
    pub group_cap: usize,
    pub level_widths: [[usize; 3]; 4],
    pub restore_width: usize,
    pub expand_widths: [usize; 2],
    pub dist_hidden: usize,
    pub coord_hidden: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_hat: 1024,
            r: 4,
            radii: [0.1, 0.2, 0.4, 0.6],
            group_cap: 32,
            level_widths: [[32, 32, 64], [32, 32, 64], [64, 64, 128], [64, 64, 128]],
            restore_width: 64,
            expand_widths: [256, 128],
            dist_hidden: 64,
            coord_hidden: 64,
        }
    }
}

impl NetworkConfig {
    /// Points retained from each patch.
    pub fn retained(&self) -> usize {
        self.n_hat / 2
    }

    /// Center counts of the four set-abstraction levels.
    pub fn level_sizes(&self) -> [usize; 4] {
        let n = self.retained();
        [n, n / 2, n / 4, n / 8]
    }

    pub fn feature_width(&self) -> usize {
        4 * self.restore_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hat < 16 || self.n_hat % 16 != 0 {
            return Err(Error::Config(format!("n_hat must be a positive multiple of 16, got {}", self.n_hat)));
        }
        if self.r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if self.group_cap == 0 {
            return Err(Error::Config("group_cap must be at least 1".into()));
        }
        if self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("grouping radii must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`.
    pub w: Tensor,
    /// `1 x out`.
    pub b: Tensor,
}

impl Linear {
    /// Weights uniform in `gain * sqrt(3 / fan_in)` either side of zero.
    fn init(fan_in: usize, fan_out: usize, gain: f64, rng: &mut crate::rng::Rng) -> Self {
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            w: Tensor { rows: fan_in, cols: fan_out, data },
            b: Tensor::zeros(1, fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    /// Per level, three shared-MLP layers.
    pub levels: Vec<Vec<Linear>>,
    /// Per level, projection to `restore_width` channels.
    pub restore: Vec<Linear>,
    /// Per expansion copy, two layers.
    pub expansion: Vec<[Linear; 2]>,
    pub distance_head: [Linear; 2],
    pub coordinate_head: [Linear; 2],
}

/// Seeded fan-in-scaled uniform weights; biases are zero except the distance
/// output.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    config.validate()?;
    let mut rng = rng_from(seed);
    let mut levels = Vec::with_capacity(4);
    let mut prev = 0;
    for widths in &config.level_widths {
        let mut fan_in = 3 + prev;
        let mut layers = Vec::with_capacity(3);
        for &w in widths {
            layers.push(Linear::init(fan_in, w, RELU_GAIN, &mut rng));
            fan_in = w;
        }
        prev = widths[2];
        levels.push(layers);
    }
    let restore = config
        .level_widths
        .iter()
        .map(|w| Linear::init(w[2], config.restore_width, RELU_GAIN, &mut rng))
        .collect();
    let d = config.feature_width();
    let [e1, e2] = config.expand_widths;
    let expansion = (0..config.r)
        .map(|_| [Linear::init(d, e1, RELU_GAIN, &mut rng), Linear::init(e1, e2, RELU_GAIN, &mut rng)])
        .collect();
    let mut distance_out = Linear::init(config.dist_hidden, 1, DISTANCE_GAIN, &mut rng);
    distance_out.b.data[0] = DISTANCE_BIAS;
    let distance_head = [Linear::init(e2, config.dist_hidden, RELU_GAIN, &mut rng), distance_out];
    let coordinate_head = [
        Linear::init(e2 + config.dist_hidden, config.coord_hidden, RELU_GAIN, &mut rng),
        Linear::init(config.coord_hidden, 3, RESIDUAL_GAIN, &mut rng),
    ];
    Ok(NetworkParams {
        config: config.clone(),
        levels,
        restore,
        expansion,
        distance_head,
        coordinate_head,
    })
}

impl NetworkParams {
    fn layers(&self) -> Vec<(String, &Linear)> {
        let mut out = Vec::new();
        for (l, layers) in self.levels.iter().enumerate() {
            for (j, lin) in layers.iter().enumerate() {
                out.push((format!("level{l}.mlp{j}"), lin));
            }
        }
        for (l, lin) in self.restore.iter().enumerate() {
            out.push((format!("restore{l}"), lin));
        }
        for (c, pair) in self.expansion.iter().enumerate() {
            for (j, lin) in pair.iter().enumerate() {
                out.push((format!("expand{c}.fc{j}"), lin));
            }
        }
        for (j, lin) in self.distance_head.iter().enumerate() {
            out.push((format!("distance.fc{j}"), lin));
        }
        for (j, lin) in self.coordinate_head.iter().enumerate() {
            out.push((format!("coordinate.fc{j}"), lin));
        }
        out
    }

    fn layers_mut(&mut self) -> Vec<&mut Linear> {
        let mut out: Vec<&mut Linear> = Vec::new();
        for layers in &mut self.levels {
            out.extend(layers.iter_mut());
        }
        out.extend(self.restore.iter_mut());
        for pair in &mut self.expansion {
            out.extend(pair.iter_mut());
        }
        out.extend(self.distance_head.iter_mut());
        out.extend(self.coordinate_head.iter_mut());
        out
    }

    /// Every array with a stable name, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.layers()
            .into_iter()
            .flat_map(|(name, lin)| [(format!("{name}.w"), &lin.w), (format!("{name}.b"), &lin.b)])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers_mut()
            .into_iter()
            .flat_map(|lin| [&mut lin.w, &mut lin.b])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Hex SHA-256 of the configuration and every array's name and shape.
    pub fn architecture_hash(&self) -> String {
        architecture_hash(&self.config, &self.named_tensors())
    }

    /// Zeroes the final coordinate layer so outputs equal the replicated
    /// inputs.
    pub fn zero_residual_head(&mut self) {
        for t in [&mut self.coordinate_head[1].w, &mut self.coordinate_head[1].b] {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

fn architecture_hash(config: &NetworkConfig, tensors: &[(String, &Tensor)]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{config:?}\n"));
    for (name, t) in tensors {
        h.update(format!("{name}:{}x{}\n", t.rows, t.cols));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Architecture hash for a configuration without materializing weights.
pub fn architecture_hash_for(config: &NetworkConfig) -> Result<String> {
    Ok(init_params(config, 0)?.architecture_hash())
}

/// Tape handles for every parameter, in [`NetworkParams::tensors`] order.
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    /// Puts the parameters on the tape; `trainable` decides whether they
    /// receive gradients.
    pub fn record(tape: &mut Tape, params: &NetworkParams, trainable: bool) -> Self {
        let vars = params
            .tensors()
            .into_iter()
            .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients in [`NetworkParams::tensors`] order.
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|&v| grads.take(v).expect("parameter gradient"))
            .collect()
    }

    fn linear(&self, k: usize) -> (Var, Var) {
        (self.vars[2 * k], self.vars[2 * k + 1])
    }
}

/// Layer index helpers matching the canonical order.
struct Layout {
    r: usize,
}

impl Layout {
    fn level(&self, l: usize, j: usize) -> usize {
        3 * l + j
    }
    fn restore(&self, l: usize) -> usize {
        12 + l
    }
    fn expand(&self, c: usize, j: usize) -> usize {
        16 + 2 * c + j
    }
    fn distance(&self, j: usize) -> usize {
        16 + 2 * self.r + j
    }
    fn coordinate(&self, j: usize) -> usize {
        18 + 2 * self.r + j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Indices of this level's centers into the previous level's points
    /// (the patch points for the first level).
    pub centers: Vec<usize>,
    pub center_points: Vec<Point3>,
    /// Flattened neighbor indices into the previous level's points.
    pub neighbors: Vec<usize>,
    /// Group boundaries into `neighbors`.
    pub offsets: Vec<usize>,
    /// `(neighbor - center) / radius` per grouped row.
    pub relative: Vec<Point3>,
    /// Three nearest centers of each retained point, with normalized
    /// inverse squared-distance weights.
    pub interp_idx: Vec<[usize; 3]>,
    pub interp_w: Vec<[f64; 3]>,
}

/// Everything about a patch that does not depend on the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGeometry {
    /// Patch indices of the retained points, nearest the origin first.
    pub retained: Vec<usize>,
    pub retained_points: Vec<Point3>,
    pub levels: Vec<Level>,
}

/// Index of the point nearest the origin; ties by index.
fn nearest_origin(points: &[Point3]) -> usize {
    (0..points.len())
        .min_by(|&a, &b| points[a].norm_sq().total_cmp(&points[b].norm_sq()).then(a.cmp(&b)))
        .expect("non-empty level")
}

fn interpolation(targets: &[Point3], sources: &[Point3]) -> (Vec<[usize; 3]>, Vec<[f64; 3]>) {
    let tree = KdTree::new(sources);
    let k = sources.len().min(3);
    targets
        .iter()
        .map(|&q| {
            let nn = tree.knn(q, k, None);
            let mut idx = [nn[0].index; 3];
            let mut w = [0.0; 3];
            for (slot, n) in nn.iter().enumerate() {
                idx[slot] = n.index;
                w[slot] = 1.0 / (n.dist_sq + INTERP_EPS);
            }
            let total: f64 = w.iter().sum();
            (idx, w.map(|x| x / total))
        })
        .unzip()
}

impl PatchGeometry {
    pub fn new(points: &[Point3], config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        if points.len() != config.n_hat {
            return Err(Error::ShapeMismatch {
                op: "patch points",
                left: vec![points.len()],
                right: vec![config.n_hat],
            });
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].norm_sq().total_cmp(&points[b].norm_sq()).then(a.cmp(&b)));
        order.truncate(config.retained());
        let retained_points: Vec<Point3> = order.iter().map(|&i| points[i]).collect();

        let mut levels = Vec::with_capacity(4);
        let mut prev: Vec<Point3> = points.to_vec();
        for (l, &count) in config.level_sizes().iter().enumerate() {
            let centers = farthest_point_sampling(&prev, count, nearest_origin(&prev));
            let center_points: Vec<Point3> = centers.iter().map(|&i| prev[i]).collect();
            let tree = KdTree::new(&prev);
            let mut neighbors = Vec::new();
            let mut offsets = vec![0];
            let mut relative = Vec::new();
            for (&ci, &c) in centers.iter().zip(&center_points) {
                let mut group: Vec<usize> = tree
                    .within(c, config.radii[l])
                    .into_iter()
                    .take(config.group_cap)
                    .map(|n| n.index)
                    .collect();
                if group.is_empty() {
                    group.push(ci);
                }
                relative.extend(group.iter().map(|&j| (prev[j] - c) / config.radii[l]));
                neighbors.extend(group);
                offsets.push(neighbors.len());
            }
            let (interp_idx, interp_w) = interpolation(&retained_points, &center_points);
            levels.push(Level {
                centers,
                center_points: center_points.clone(),
                neighbors,
                offsets,
                relative,
                interp_idx,
                interp_w,
            });
            prev = center_points;
        }
        Ok(Self {
            retained: order,
            retained_points,
            levels,
        })
    }
}

fn points_tensor(points: &[Point3]) -> Tensor {
    Tensor {
        rows: points.len(),
        cols: 3,
        data: points.iter().flat_map(|p| p.to_array()).collect(),
    }
}

/// Tape handles produced by one forward pass.
pub struct Forward {
    /// Per-level max-pooled features at the level centers.
    pub level_features: Vec<Var>,
    /// `N x 256`.
    pub features: Var,
    /// `rN x 128`, copy-major.
    pub expanded: Var,
    /// `rN x 64`.
    pub distance_features: Var,
    /// `rN x 1`, raw head output.
    pub distance: Var,
    /// `rN x 3`, normalized patch frame.
    pub points: Var,
}

/// Multi-level embedding to `N x 256` features at the retained points.
pub fn feature_embed(tape: &mut Tape, pv: &ParamVars, geo: &PatchGeometry, config: &NetworkConfig) -> Result<(Var, Vec<Var>)> {
    let layout = Layout { r: config.r };
    let mut level_features = Vec::with_capacity(4);
    let mut restored = Vec::with_capacity(4);
    let mut prev: Option<Var> = None;
    for (l, level) in geo.levels.iter().enumerate() {
        let rel = tape.constant(points_tensor(&level.relative));
        let mut h = match prev {
            None => rel,
            Some(f) => {
                let g = tape.gather_rows(f, &level.neighbors)?;
                tape.concat_cols(&[rel, g])?
            }
        };
        for j in 0..3 {
            let (w, b) = pv.linear(layout.level(l, j));
            h = tape.linear_relu(h, w, b)?;
        }
        let pooled = tape.max_over_groups(h, &level.offsets)?;
        level_features.push(pooled);
        let up = tape.interpolate(pooled, &level.interp_idx, &level.interp_w)?;
        let (w, b) = pv.linear(layout.restore(l));
        restored.push(tape.linear_relu(up, w, b)?);
        prev = Some(pooled);
    }
    Ok((tape.concat_cols(&restored)?, level_features))
}

/// `r` independent two-layer branches stacked copy-major: row `i` comes
/// from retained point `i % N`.
pub fn feature_expand(tape: &mut Tape, pv: &ParamVars, features: Var, config: &NetworkConfig) -> Result<Var> {
    let layout = Layout { r: config.r };
    let mut copies = Vec::with_capacity(config.r);
    for c in 0..config.r {
        let (w0, b0) = pv.linear(layout.expand(c, 0));
        let (w1, b1) = pv.linear(layout.expand(c, 1));
        let h = tape.linear_relu(features, w0, b0)?;
        copies.push(tape.linear_relu(h, w1, b1)?);
    }
    tape.concat_rows(&copies)
}

/// Distance feature (relu) and raw distance (no activation).
pub fn regress_edge_distance(tape: &mut Tape, pv: &ParamVars, expanded: Var, config: &NetworkConfig) -> Result<(Var, Var)> {
    let layout = Layout { r: config.r };
    let (w0, b0) = pv.linear(layout.distance(0));
    let (w1, b1) = pv.linear(layout.distance(1));
    let f_dist = tape.linear_relu(expanded, w0, b0)?;
    let d = tape.linear(f_dist, w1, b1)?;
    Ok((f_dist, d))
}

/// Residual head on `[f', f_dist]`, added to the replicated retained points.
pub fn regress_coordinates(
    tape: &mut Tape,
    pv: &ParamVars,
    expanded: Var,
    f_dist: Var,
    retained_points: &[Point3],
    config: &NetworkConfig,
) -> Result<Var> {
    let layout = Layout { r: config.r };
    let (w0, b0) = pv.linear(layout.coordinate(0));
    let (w1, b1) = pv.linear(layout.coordinate(1));
    let joined = tape.concat_cols(&[expanded, f_dist])?;
    let h = tape.linear_relu(joined, w0, b0)?;
    let residual = tape.linear(h, w1, b1)?;
    let base = tape.constant(points_tensor(retained_points));
    let base = tape.replicate(base, config.r);
    tape.add(residual, base)
}

pub fn forward(tape: &mut Tape, pv: &ParamVars, geo: &PatchGeometry, config: &NetworkConfig) -> Result<Forward> {
    let (features, level_features) = feature_embed(tape, pv, geo, config)?;
    let expanded = feature_expand(tape, pv, features, config)?;
    let (distance_features, distance) = regress_edge_distance(tape, pv, expanded, config)?;
    let points = regress_coordinates(tape, pv, expanded, distance_features, &geo.retained_points, config)?;
    Ok(Forward {
        level_features,
        features,
        expanded,
        distance_features,
        distance,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidationOutput {
    /// `rN` points in the normalized patch frame.
    pub points: Vec<Point3>,
    pub regressed_d: Vec<f64>,
    pub edge_mask: Vec<bool>,
    /// Patch index of the input point each output descends from.
    pub source_point: Vec<usize>,
}

/// `d_i < delta`, strictly.
pub fn identify_edge_points(regressed_d: &[f64], delta: f64) -> Vec<bool> {
    regressed_d.iter().map(|&d| d < delta).collect()
}

/// Inference on one normalized patch.
pub fn infer(params: &NetworkParams, patch_points: &[Point3], delta: f64) -> Result<ConsolidationOutput> {
    let config = &params.config;
    let geo = PatchGeometry::new(patch_points, config)?;
    let mut tape = Tape::new();
    let pv = ParamVars::record(&mut tape, params, false);
    let out = forward(&mut tape, &pv, &geo, config)?;
    let pts = tape.value(out.points);
    let points = pts.data.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
    let regressed_d = tape.value(out.distance).data.clone();
    let n = geo.retained.len();
    let source_point = (0..n * config.r).map(|i| geo.retained[i % n]).collect();
    Ok(ConsolidationOutput {
        edge_mask: identify_edge_points(&regressed_d, delta),
        points,
        regressed_d,
        source_point,
    })
}
