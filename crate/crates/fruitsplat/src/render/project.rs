//! Perspective projection of 3D Gaussians to screen-space 2D Gaussians.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::colmap::CameraFrame;
use crate::gaussian::GaussianCloud;
use crate::math::{quat_to_rotation, sigmoid, sigmoid_grad};

use super::COV2D_BLUR;

/// A Gaussian after projection into one camera.
#[derive(Debug, Clone)]
pub struct ProjectedGaussian {
    /// Projected center in pixel coordinates.
    pub pixel_mean: Vector2<f64>,
    /// Screen-space covariance in px², blur-regularized (positive definite).
    pub cov2d: Matrix2<f64>,
    /// Camera-space depth in meters.
    pub depth: f64,
    /// Index of the source Gaussian in the cloud.
    pub parent_index: usize,
}

/// First-order perspective Jacobian at a camera-space point.
#[inline]
pub(crate) fn perspective_jacobian(p: &Vector3<f64>, fx: f64, fy: f64) -> Matrix2x3<f64> {
    let inv_z = 1.0 / p.z;
    let inv_z2 = inv_z * inv_z;
    Matrix2x3::new(
        fx * inv_z,
        0.0,
        -fx * p.x * inv_z2,
        0.0,
        fy * inv_z,
        -fy * p.y * inv_z2,
    )
}

/// Project every Gaussian with camera-space depth beyond `near_clip`.
///
/// Survivors keep the input order. `cov2d = J W Σ Wᵀ Jᵀ + λ·I` with the
/// fixed blur floor [`COV2D_BLUR`] on the diagonal.
pub fn project(
    cloud: &GaussianCloud,
    frame: &CameraFrame,
    near_clip: f64,
) -> Vec<ProjectedGaussian> {
    let r_cam = quat_to_rotation(&frame.rotation);
    let (fx, fy) = (frame.intrinsics.fx, frame.intrinsics.fy);
    let (cx, cy) = (frame.intrinsics.cx, frame.intrinsics.cy);
    let mut out = Vec::with_capacity(cloud.len());
    for (i, g) in cloud.gaussians.iter().enumerate() {
        let p_cam = r_cam * g.mean + frame.translation;
        if p_cam.z <= near_clip {
            continue;
        }
        let pixel_mean = Vector2::new(
            fx * p_cam.x / p_cam.z + cx,
            fy * p_cam.y / p_cam.z + cy,
        );
        let j = perspective_jacobian(&p_cam, fx, fy);
        let cov_cam = r_cam * g.covariance() * r_cam.transpose();
        let cov2d = j * cov_cam * j.transpose() + Matrix2::identity() * COV2D_BLUR;
        out.push(ProjectedGaussian {
            pixel_mean,
            cov2d,
            depth: p_cam.z,
            parent_index: i,
        });
    }
    out
}

/// Kernel cutoff: contributions below this fraction of the peak are dropped.
/// Far below float render precision so tile culling stays invisible to
/// finite-difference probes of the forward pass.
const KERNEL_CUTOFF: f64 = 1e-12;

/// Projection plus everything the tile loops need, shared by the forward
/// and backward passes so culling and ordering are always identical.
pub(crate) struct PreparedGaussian {
    pub mu: Vector2<f64>,
    pub inv_cov: Matrix2<f64>,
    pub depth: f64,
    pub parent: usize,
    pub opacity: f64,
    /// Mahalanobis cutoff matching the tile-binning radius.
    pub q_cut: f64,
    pub color: [f64; 3],
    pub s_prob: f64,
    pub b_prob: f64,
    /// d sigmoid / d logit for the opacity / strawberry / bruise logits.
    pub o_dprob: f64,
    pub s_dprob: f64,
    pub b_dprob: f64,
}

pub(crate) struct PreparedScene {
    /// Depth-sorted survivors (ties broken by cloud index).
    pub gaussians: Vec<PreparedGaussian>,
    /// Per-tile indices into `gaussians`, each list in depth order.
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
}

pub(crate) fn prepare(
    cloud: &GaussianCloud,
    frame: &CameraFrame,
    near_clip: f64,
    tile_size: usize,
) -> PreparedScene {
    let width = frame.intrinsics.width as usize;
    let height = frame.intrinsics.height as usize;
    let tiles_x = width.div_ceil(tile_size);
    let tiles_y = height.div_ceil(tile_size);

    let mut projected = project(cloud, frame, near_clip);
    projected.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.parent_index.cmp(&b.parent_index))
    });

    let mut gaussians = Vec::with_capacity(projected.len());
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for pg in projected {
        let g = &cloud.gaussians[pg.parent_index];
        let opacity = sigmoid(g.opacity_logit);
        if opacity <= KERNEL_CUTOFF {
            continue;
        }
        let det = pg.cov2d.determinant();
        debug_assert!(det > 0.0, "blur-regularized cov2d must be PD");
        let inv_cov = Matrix2::new(
            pg.cov2d[(1, 1)],
            -pg.cov2d[(0, 1)],
            -pg.cov2d[(1, 0)],
            pg.cov2d[(0, 0)],
        ) / det;
        let q_cut = 2.0 * (opacity / KERNEL_CUTOFF).ln();
        // Conservative radius from the largest eigenvalue.
        let half_trace = 0.5 * (pg.cov2d[(0, 0)] + pg.cov2d[(1, 1)]);
        let half_gap = 0.5 * (pg.cov2d[(0, 0)] - pg.cov2d[(1, 1)]);
        let lambda_max = half_trace + (half_gap * half_gap + pg.cov2d[(0, 1)] * pg.cov2d[(0, 1)]).sqrt();
        let radius = (q_cut * lambda_max).sqrt();

        let x0 = ((pg.pixel_mean.x - radius) / tile_size as f64).floor().max(0.0) as usize;
        let y0 = ((pg.pixel_mean.y - radius) / tile_size as f64).floor().max(0.0) as usize;
        let x1 = ((pg.pixel_mean.x + radius) / tile_size as f64).floor() as i64;
        let y1 = ((pg.pixel_mean.y + radius) / tile_size as f64).floor() as i64;
        if x1 < 0 || y1 < 0 || x0 >= tiles_x || y0 >= tiles_y {
            continue;
        }
        let x1 = (x1 as usize).min(tiles_x - 1);
        let y1 = (y1 as usize).min(tiles_y - 1);

        let idx = gaussians.len() as u32;
        gaussians.push(PreparedGaussian {
            mu: pg.pixel_mean,
            inv_cov,
            depth: pg.depth,
            parent: pg.parent_index,
            opacity,
            q_cut,
            color: g.color,
            s_prob: sigmoid(g.s_logit),
            b_prob: sigmoid(g.b_logit),
            o_dprob: sigmoid_grad(g.opacity_logit),
            s_dprob: sigmoid_grad(g.s_logit),
            b_dprob: sigmoid_grad(g.b_logit),
        });
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                tiles[ty * tiles_x + tx].push(idx);
            }
        }
    }
    PreparedScene {
        gaussians,
        tiles,
        tiles_x,
        tiles_y,
        width,
        height,
    }
}

/// Rotation matrix of a frame, exposed for the backward chain.
pub(crate) fn frame_rotation(frame: &CameraFrame) -> Matrix3<f64> {
    quat_to_rotation(&frame.rotation)
}
