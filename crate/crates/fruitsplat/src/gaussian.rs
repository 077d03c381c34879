//! The optimizable Gaussian primitive and cloud-level I/O.
//!
//! Each Gaussian carries geometry (mean, log-scale, rotation), appearance
//! (opacity logit, RGB color) and two semantic logits: `s_logit` for
//! strawberry membership and `b_logit` for bruise likelihood. Probabilities
//! are always `sigmoid(logit)`; scales activate with `exp`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Quaternion, Vector3};
use thiserror::Error;

use crate::colmap::SparsePoint;
use crate::math::{quat_to_rotation, sigmoid};

/// Isotropic scale used when a cloud has a single point and no neighbors.
pub const SINGLE_POINT_FALLBACK_SCALE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: io::Error,
    },
    #[error("cannot build a cloud from an empty point list")]
    EmptyPoints,
    #[error("cannot export an empty cloud")]
    EmptyCloud,
    #[error("invalid PLY in {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("missing property {name} in {path}")]
    MissingProperty { name: String, path: String },
    #[error("invalid gaussian: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    /// World-space center in meters.
    pub mean: Vector3<f64>,
    /// Per-axis log of the standard deviation in meters.
    pub log_scale: Vector3<f64>,
    /// Orientation, unit within 1e-6 (normalized by every consumer).
    pub rotation: Quaternion<f64>,
    /// Pre-sigmoid opacity.
    pub opacity_logit: f64,
    /// RGB in [0, 1]; degree-0 color, no view dependence.
    pub color: [f64; 3],
    /// Pre-sigmoid strawberry-membership channel.
    pub s_logit: f64,
    /// Pre-sigmoid bruise-likelihood channel.
    pub b_logit: f64,
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn strawberry_prob(&self) -> f64 {
        sigmoid(self.s_logit)
    }

    pub fn bruise_prob(&self) -> f64 {
        sigmoid(self.b_logit)
    }

    /// World-space 3x3 covariance `R diag(exp(log_scale))² Rᵀ`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = quat_to_rotation(&self.rotation);
        let s = self.log_scale.map(f64::exp);
        let m = r * Matrix3::from_diagonal(&s);
        m * m.transpose()
    }

    pub fn validate(&self) -> Result<(), GaussianError> {
        let finite = self.mean.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.color.iter().all(|v| v.is_finite())
            && self.s_logit.is_finite()
            && self.b_logit.is_finite();
        if !finite {
            return Err(GaussianError::Invalid("non-finite field".to_string()));
        }
        if self.rotation.norm() < 1e-12 {
            return Err(GaussianError::Invalid("zero-norm rotation".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CloudMetadata {
    /// Training steps applied so far.
    pub step: u64,
    /// Where the cloud came from (a path or a generator tag).
    pub source: String,
}

/// The optimizable scene: a flat set of Gaussians plus provenance metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian>,
    pub metadata: CloudMetadata,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Build a cloud from sparse points.
///
/// Means and colors come from the points; the isotropic scale per point is
/// the mean distance to its `knn_k` nearest neighbors (capped at the number
/// of other points, with [`SINGLE_POINT_FALLBACK_SCALE`] for a lone point).
/// Semantic logits start at 0, i.e. probability one half.
pub fn init_from_points(
    points: &[SparsePoint],
    initial_opacity: f64,
    knn_k: usize,
) -> Result<GaussianCloud, GaussianError> {
    if points.is_empty() {
        return Err(GaussianError::EmptyPoints);
    }
    assert!(
        initial_opacity > 0.0 && initial_opacity < 1.0,
        "initial_opacity must lie in (0, 1)"
    );
    assert!(knn_k >= 1, "knn_k must be at least 1");
    let opacity_logit = crate::math::logit(initial_opacity);

    let gaussians = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let scale = mean_knn_distance(points, i, knn_k)
                .unwrap_or(SINGLE_POINT_FALLBACK_SCALE);
            Gaussian {
                mean: p.position,
                log_scale: Vector3::repeat(scale.ln()),
                rotation: Quaternion::new(1.0, 0.0, 0.0, 0.0),
                opacity_logit,
                color: [
                    p.color[0] as f64 / 255.0,
                    p.color[1] as f64 / 255.0,
                    p.color[2] as f64 / 255.0,
                ],
                s_logit: 0.0,
                b_logit: 0.0,
            }
        })
        .collect();
    Ok(GaussianCloud {
        gaussians,
        metadata: CloudMetadata {
            step: 0,
            source: "init_from_points".to_string(),
        },
    })
}

/// Mean distance from point `i` to its `k` nearest neighbors, or `None` when
/// there are no other points. Brute force; clouds here are desk scale.
fn mean_knn_distance(points: &[SparsePoint], i: usize, k: usize) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = k.min(points.len() - 1);
    let mut dists: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| (p.position - points[i].position).norm())
        .collect();
    dists.sort_by(f64::total_cmp);
    Some(dists[..k].iter().sum::<f64>() / k as f64)
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

const PLY_PROPERTIES: [&str; 16] = [
    "x",
    "y",
    "z",
    "red",
    "green",
    "blue",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
    "strawberry",
    "bruise",
];

fn ply_io_err(path: &Path) -> impl FnOnce(io::Error) -> GaussianError + '_ {
    move |source| GaussianError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Export a cloud as binary little-endian PLY.
///
/// Per-vertex properties (all doubles): `x y z red green blue opacity
/// scale_0..2 rot_0..3 strawberry bruise`, with `rot_0` the scalar part.
/// With `activated` set, `opacity`/`strawberry`/`bruise` hold sigmoid
/// probabilities; otherwise raw logits. Scales stay in log space either way.
pub fn export_ply(cloud: &GaussianCloud, path: &Path, activated: bool) -> Result<(), GaussianError> {
    if cloud.is_empty() {
        return Err(GaussianError::EmptyCloud);
    }
    for g in &cloud.gaussians {
        g.validate()?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(ply_io_err(path))?);
    let res: io::Result<()> = (|| {
        writeln!(w, "ply")?;
        writeln!(w, "format binary_little_endian 1.0")?;
        writeln!(w, "comment mode {}", if activated { "activated" } else { "raw" })?;
        writeln!(w, "comment step {}", cloud.metadata.step)?;
        writeln!(w, "element vertex {}", cloud.len())?;
        for name in PLY_PROPERTIES {
            writeln!(w, "property double {name}")?;
        }
        writeln!(w, "end_header")?;
        for g in &cloud.gaussians {
            let (o, s, b) = if activated {
                (g.opacity(), g.strawberry_prob(), g.bruise_prob())
            } else {
                (g.opacity_logit, g.s_logit, g.b_logit)
            };
            for v in [
                g.mean.x,
                g.mean.y,
                g.mean.z,
                g.color[0],
                g.color[1],
                g.color[2],
                o,
                g.log_scale.x,
                g.log_scale.y,
                g.log_scale.z,
                g.rotation.w,
                g.rotation.i,
                g.rotation.j,
                g.rotation.k,
                s,
                b,
            ] {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()
    })();
    res.map_err(ply_io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyScalar {
    Double,
    Float,
}

impl PlyScalar {
    fn size(self) -> usize {
        match self {
            PlyScalar::Double => 8,
            PlyScalar::Float => 4,
        }
    }
}

pub(crate) struct PlyContents {
    pub activated: bool,
    pub step: u64,
    pub names: Vec<String>,
    /// One row of property values per vertex, in header order.
    pub rows: Vec<Vec<f64>>,
}

/// Generic reader for the binary PLY layout this crate writes.
pub(crate) fn read_ply(path: &Path) -> Result<PlyContents, GaussianError> {
    let file = File::open(path).map_err(ply_io_err(path))?;
    let mut reader = BufReader::new(file);
    let fmt_err = |msg: String| GaussianError::Format {
        path: path.display().to_string(),
        msg,
    };

    let mut line = String::new();
    reader.read_line(&mut line).map_err(ply_io_err(path))?;
    if line.trim_end() != "ply" {
        return Err(fmt_err("missing ply magic".to_string()));
    }

    let mut props: Vec<(String, PlyScalar)> = Vec::new();
    let mut vertex_count: Option<u64> = None;
    let mut activated = false;
    let mut step = 0u64;
    let mut saw_format = false;
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(ply_io_err(path))? == 0 {
            return Err(fmt_err("header ended before end_header".to_string()));
        }
        let line = line.trim_end();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("format") => {
                let kind = it.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(fmt_err(format!(
                        "unsupported format {kind:?}; only binary_little_endian is accepted"
                    )));
                }
                saw_format = true;
            }
            Some("comment") => match (it.next(), it.next()) {
                (Some("mode"), Some("activated")) => activated = true,
                (Some("step"), Some(v)) => step = v.parse().unwrap_or(0),
                _ => {}
            },
            Some("element") => {
                let name = it.next().unwrap_or("");
                let count: u64 = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| fmt_err("bad element line".to_string()))?;
                if name == "vertex" {
                    vertex_count = Some(count);
                } else if count != 0 {
                    return Err(fmt_err(format!("unsupported element {name}")));
                }
            }
            Some("property") => {
                let ty = it.next().unwrap_or("");
                let scalar = match ty {
                    "double" | "float64" => PlyScalar::Double,
                    "float" | "float32" => PlyScalar::Float,
                    other => {
                        return Err(fmt_err(format!("unsupported property type {other}")));
                    }
                };
                let name = it
                    .next()
                    .ok_or_else(|| fmt_err("property without a name".to_string()))?;
                props.push((name.to_string(), scalar));
            }
            Some("end_header") => break,
            Some(other) => return Err(fmt_err(format!("unexpected header token {other}"))),
            None => {}
        }
    }
    if !saw_format {
        return Err(fmt_err("header missing format line".to_string()));
    }
    let vertex_count = vertex_count.ok_or_else(|| fmt_err("no vertex element".to_string()))?;

    let mut rows = Vec::with_capacity(vertex_count as usize);
    for _ in 0..vertex_count {
        let mut row = Vec::with_capacity(props.len());
        for (_, scalar) in &props {
            let v = match scalar {
                PlyScalar::Double => reader.read_f64::<LittleEndian>(),
                PlyScalar::Float => reader.read_f32::<LittleEndian>().map(f64::from),
            }
            .map_err(|e| {
                if e.kind() == io::ErrorKind::UnexpectedEof {
                    fmt_err(format!("truncated vertex data (expected {vertex_count} vertices)"))
                } else {
                    ply_io_err(path)(e)
                }
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    // Trailing bytes mean corrupt vertex stride; flag rather than ignore.
    let mut sink = [0u8; 1];
    if reader.read(&mut sink).map_err(ply_io_err(path))? != 0 {
        return Err(fmt_err("trailing bytes after vertex data".to_string()));
    }
    Ok(PlyContents {
        activated,
        step,
        names: props.into_iter().map(|(n, _)| n).collect(),
        rows,
    })
}

/// Import a cloud exported by [`export_ply`] in raw-logit mode.
pub fn import_ply(path: &Path) -> Result<GaussianCloud, GaussianError> {
    let contents = read_ply(path)?;
    if contents.activated {
        return Err(GaussianError::Format {
            path: path.display().to_string(),
            msg: "activated PLY holds probabilities, not logits; export raw to re-import"
                .to_string(),
        });
    }
    let mut idx = [0usize; 16];
    for (k, name) in PLY_PROPERTIES.iter().enumerate() {
        idx[k] = contents
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| GaussianError::MissingProperty {
                name: name.to_string(),
                path: path.display().to_string(),
            })?;
    }
    let gaussians = contents
        .rows
        .iter()
        .map(|row| Gaussian {
            mean: Vector3::new(row[idx[0]], row[idx[1]], row[idx[2]]),
            color: [row[idx[3]], row[idx[4]], row[idx[5]]],
            opacity_logit: row[idx[6]],
            log_scale: Vector3::new(row[idx[7]], row[idx[8]], row[idx[9]]),
            rotation: Quaternion::new(row[idx[10]], row[idx[11]], row[idx[12]], row[idx[13]]),
            s_logit: row[idx[14]],
            b_logit: row[idx[15]],
        })
        .collect();
    Ok(GaussianCloud {
        gaussians,
        metadata: CloudMetadata {
            step: contents.step,
            source: path.display().to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn random_cloud(n: usize, seed: u64) -> GaussianCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaussians = (0..n)
            .map(|_| {
                let q = Quaternion::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                Gaussian {
                    mean: Vector3::new(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ),
                    log_scale: Vector3::new(
                        rng.gen_range(-5.0..0.0),
                        rng.gen_range(-5.0..0.0),
                        rng.gen_range(-5.0..0.0),
                    ),
                    rotation: q / q.norm(),
                    opacity_logit: rng.gen_range(-4.0..4.0),
                    color: [rng.gen(), rng.gen(), rng.gen()],
                    s_logit: rng.gen_range(-8.0..8.0),
                    b_logit: rng.gen_range(-8.0..8.0),
                }
            })
            .collect();
        GaussianCloud {
            gaussians,
            metadata: CloudMetadata {
                step: 42,
                source: "test".to_string(),
            },
        }
    }

    #[test]
    fn init_three_collinear_points_matches_hand_knn() {
        let points: Vec<SparsePoint> = (0..3)
            .map(|i| SparsePoint {
                position: Vector3::new(i as f64, 0.0, 0.0),
                color: [100, 100, 100],
            })
            .collect();
        let cloud = init_from_points(&points, 0.5, 2).unwrap();
        // Ends: neighbors at 1 m and 2 m -> mean 1.5; middle: 1 m and 1 m.
        assert_relative_eq!(cloud.gaussians[0].log_scale.x, 1.5f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(cloud.gaussians[1].log_scale.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cloud.gaussians[2].log_scale.x, 1.5f64.ln(), epsilon = 1e-12);
        assert_eq!(cloud.gaussians[0].opacity_logit, 0.0); // logit(0.5)
        assert_eq!(cloud.gaussians[0].s_logit, 0.0);
        assert_eq!(cloud.gaussians[0].b_logit, 0.0);
    }

    #[test]
    fn init_single_point_uses_fallback_scale() {
        let points = vec![SparsePoint {
            position: Vector3::zeros(),
            color: [255, 0, 0],
        }];
        let cloud = init_from_points(&points, 0.3, 3).unwrap();
        assert_relative_eq!(
            cloud.gaussians[0].log_scale.x,
            SINGLE_POINT_FALLBACK_SCALE.ln(),
            epsilon = 1e-12
        );
        assert_eq!(cloud.gaussians[0].color, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn init_rejects_empty_points() {
        assert!(matches!(
            init_from_points(&[], 0.5, 3),
            Err(GaussianError::EmptyPoints)
        ));
    }

    #[test]
    fn ply_roundtrip_is_exact() {
        let cloud = random_cloud(50, 1);
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        export_ply(&cloud, &path, false).unwrap();
        let back = import_ply(&path).unwrap();
        assert_eq!(back.len(), cloud.len());
        assert_eq!(back.metadata.step, 42);
        for (a, b) in cloud.gaussians.iter().zip(&back.gaussians) {
            assert_eq!(a, b); // doubles on disk, bit-exact
        }
    }

    #[test]
    fn activated_export_applies_sigmoid_and_preserves_order() {
        let cloud = random_cloud(20, 2);
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        export_ply(&cloud, &path, true).unwrap();
        let contents = read_ply(&path).unwrap();
        assert!(contents.activated);
        let s_col = contents.names.iter().position(|n| n == "strawberry").unwrap();
        let scores: Vec<f64> = contents.rows.iter().map(|r| r[s_col]).collect();
        for (g, s) in cloud.gaussians.iter().zip(&scores) {
            assert_relative_eq!(*s, g.strawberry_prob(), epsilon = 1e-15);
            assert!((0.0..=1.0).contains(s));
        }
        // Sigmoid is monotone, so the argmax carries over.
        let argmax_logit = (0..cloud.len())
            .max_by(|&a, &b| cloud.gaussians[a].s_logit.total_cmp(&cloud.gaussians[b].s_logit))
            .unwrap();
        let argmax_score = (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        assert_eq!(argmax_logit, argmax_score);
    }

    #[test]
    fn activated_ply_with_zero_logit_exports_half() {
        let mut cloud = random_cloud(1, 3);
        cloud.gaussians[0].s_logit = 0.0;
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.ply");
        export_ply(&cloud, &path, true).unwrap();
        let contents = read_ply(&path).unwrap();
        let s_col = contents.names.iter().position(|n| n == "strawberry").unwrap();
        assert_eq!(contents.rows[0][s_col], 0.5);
    }

    #[test]
    fn empty_cloud_export_fails() {
        let cloud = GaussianCloud {
            gaussians: vec![],
            metadata: CloudMetadata::default(),
        };
        let dir = tempdir().unwrap();
        assert!(matches!(
            export_ply(&cloud, &dir.path().join("x.ply"), false),
            Err(GaussianError::EmptyCloud)
        ));
    }

    #[test]
    fn import_rejects_activated_ply() {
        let cloud = random_cloud(3, 4);
        let dir = tempdir().unwrap();
        let path = dir.path().join("act.ply");
        export_ply(&cloud, &path, true).unwrap();
        assert!(matches!(import_ply(&path), Err(GaussianError::Format { .. })));
    }

    #[test]
    fn import_names_missing_property() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nobruise.ply");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        for name in PLY_PROPERTIES.iter().filter(|n| **n != "bruise") {
            bytes.extend_from_slice(format!("property double {name}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        bytes.extend_from_slice(&[0u8; 15 * 8]);
        std::fs::write(&path, bytes).unwrap();
        match import_ply(&path) {
            Err(GaussianError::MissingProperty { name, .. }) => assert_eq!(name, "bruise"),
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn import_rejects_ascii_ply() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ascii.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 0\nend_header\n",
        )
        .unwrap();
        assert!(matches!(import_ply(&path), Err(GaussianError::Format { .. })));
    }

    #[test]
    fn covariance_is_positive_definite_for_random_gaussians() {
        let cloud = random_cloud(1000, 5);
        for g in &cloud.gaussians {
            let cov = g.covariance();
            assert!(
                nalgebra::Cholesky::new(cov).is_some(),
                "covariance not SPD for {g:?}"
            );
        }
    }
}
