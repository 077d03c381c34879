//! COLMAP sparse-model ingest and writing.
//!
//! COLMAP stores a sparse reconstruction as three files (binary or text):
//! - `cameras.{bin,txt}`: intrinsics per camera
//! - `images.{bin,txt}`: world-to-camera pose + 2D observations per image
//! - `points3D.{bin,txt}`: triangulated points with color and track
//!
//! Binary layout follows the public format: little-endian, `u64` record
//! counts, `f64` parameters. 2D observations and tracks are skipped on read
//! and written empty; they play no role downstream.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Quaternion, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ColmapError {
    #[error("missing COLMAP file {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("no cameras.bin or cameras.txt under {}", dir.display())]
    NoModelFound { dir: PathBuf },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: io::Error,
    },
    #[error("truncated record {index} of {count} in {} at byte offset {offset}", path.display())]
    Truncated {
        path: PathBuf,
        index: u64,
        count: u64,
        offset: u64,
    },
    #[error("unsupported camera model {name} (id {id}) in {}", path.display())]
    UnsupportedCameraModel {
        id: i32,
        name: String,
        path: PathBuf,
    },
    #[error("parse error in {} line {line}: {msg}", path.display())]
    TextParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid model data in {}: {msg}", path.display())]
    Invalid { path: PathBuf, msg: String },
    #[error("invalid record: {0}")]
    Validation(String),
}

/// Supported camera models. Ids and parameter order match COLMAP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
    SimpleRadial,
}

impl CameraModel {
    pub fn id(self) -> i32 {
        match self {
            CameraModel::SimplePinhole => 0,
            CameraModel::Pinhole => 1,
            CameraModel::SimpleRadial => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
            CameraModel::SimpleRadial => "SIMPLE_RADIAL",
        }
    }

    pub fn num_params(self) -> usize {
        match self {
            CameraModel::SimplePinhole => 3,
            CameraModel::Pinhole => 4,
            CameraModel::SimpleRadial => 4,
        }
    }

    fn from_id(id: i32) -> Option<Self> {
        match id {
            0 => Some(CameraModel::SimplePinhole),
            1 => Some(CameraModel::Pinhole),
            2 => Some(CameraModel::SimpleRadial),
            _ => None,
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "SIMPLE_PINHOLE" => Some(CameraModel::SimplePinhole),
            "PINHOLE" => Some(CameraModel::Pinhole),
            "SIMPLE_RADIAL" => Some(CameraModel::SimpleRadial),
            _ => None,
        }
    }
}

/// Name for an arbitrary COLMAP model id, for error messages.
fn colmap_model_name(id: i32) -> String {
    match id {
        0 => "SIMPLE_PINHOLE",
        1 => "PINHOLE",
        2 => "SIMPLE_RADIAL",
        3 => "RADIAL",
        4 => "OPENCV",
        5 => "OPENCV_FISHEYE",
        6 => "FULL_OPENCV",
        7 => "FOV",
        8 => "SIMPLE_RADIAL_FISHEYE",
        9 => "RADIAL_FISHEYE",
        10 => "THIN_PRISM_FISHEYE",
        _ => return format!("UNKNOWN({id})"),
    }
    .to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// First radial distortion coefficient; 0 for pinhole models. Rendering
    /// assumes pre-undistorted images and ignores it (callers warn).
    pub radial_k: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), ColmapError> {
        let fail = |msg: String| Err(ColmapError::Validation(msg));
        if self.width == 0 || self.height == 0 {
            return fail(format!("degenerate image size {}x{}", self.width, self.height));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return fail(format!("non-positive focal length ({}, {})", self.fx, self.fy));
        }
        if !(0.0..=self.width as f64).contains(&self.cx)
            || !(0.0..=self.height as f64).contains(&self.cy)
        {
            return fail(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            ));
        }
        match self.model {
            CameraModel::SimplePinhole | CameraModel::SimpleRadial => {
                if self.fx != self.fy {
                    return fail(format!(
                        "{} requires fx == fy, got ({}, {})",
                        self.model.name(),
                        self.fx,
                        self.fy
                    ));
                }
            }
            CameraModel::Pinhole => {}
        }
        if self.model != CameraModel::SimpleRadial && self.radial_k != 0.0 {
            return fail(format!(
                "model {} cannot carry radial distortion {}",
                self.model.name(),
                self.radial_k
            ));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.radial_k != 0.0
    }

    fn params(&self) -> Vec<f64> {
        match self.model {
            CameraModel::SimplePinhole => vec![self.fx, self.cx, self.cy],
            CameraModel::Pinhole => vec![self.fx, self.fy, self.cx, self.cy],
            CameraModel::SimpleRadial => vec![self.fx, self.cx, self.cy, self.radial_k],
        }
    }

    fn from_params(model: CameraModel, width: u32, height: u32, p: &[f64]) -> Self {
        match model {
            CameraModel::SimplePinhole => CameraIntrinsics {
                model,
                width,
                height,
                fx: p[0],
                fy: p[0],
                cx: p[1],
                cy: p[2],
                radial_k: 0.0,
            },
            CameraModel::Pinhole => CameraIntrinsics {
                model,
                width,
                height,
                fx: p[0],
                fy: p[1],
                cx: p[2],
                cy: p[3],
                radial_k: 0.0,
            },
            CameraModel::SimpleRadial => CameraIntrinsics {
                model,
                width,
                height,
                fx: p[0],
                fy: p[0],
                cx: p[1],
                cy: p[2],
                radial_k: p[3],
            },
        }
    }
}

/// One registered image: intrinsics plus a world-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub frame_id: u32,
    pub intrinsics: CameraIntrinsics,
    /// World-to-camera rotation, unit within 1e-6 (`w` scalar-first).
    pub rotation: Quaternion<f64>,
    /// World-to-camera translation in meters.
    pub translation: Vector3<f64>,
    pub image_name: String,
}

pub const QUAT_UNIT_TOL: f64 = 1e-6;

impl CameraFrame {
    pub fn validate(&self) -> Result<(), ColmapError> {
        self.intrinsics.validate()?;
        let n = self.rotation.norm();
        if !n.is_finite() || (n - 1.0).abs() > QUAT_UNIT_TOL {
            return Err(ColmapError::Validation(format!(
                "frame {}: quaternion norm {} is not unit",
                self.frame_id, n
            )));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(ColmapError::Validation(format!(
                "frame {}: non-finite translation",
                self.frame_id
            )));
        }
        Ok(())
    }

    /// Camera center in world coordinates (`-Rᵀ t`).
    pub fn camera_center(&self) -> Vector3<f64> {
        let r = crate::math::quat_to_rotation(&self.rotation);
        -(r.transpose() * self.translation)
    }
}

/// Triangulated sparse point used to seed Gaussian means.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
}

impl SparsePoint {
    pub fn validate(&self) -> Result<(), ColmapError> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(ColmapError::Validation(
                "sparse point with non-finite position".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Binary,
    Text,
    Auto,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ColmapError + '_ {
    move |source| ColmapError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse a COLMAP sparse model directory into frames and points.
///
/// `Auto` prefers the binary files when both layouts are present. Frames and
/// points come back in file order; quaternions are normalized on read.
pub fn parse_colmap_model(
    dir: &Path,
    format: ModelFormat,
) -> Result<(Vec<CameraFrame>, Vec<SparsePoint>), ColmapError> {
    let format = match format {
        ModelFormat::Auto => {
            if dir.join("cameras.bin").is_file() {
                ModelFormat::Binary
            } else if dir.join("cameras.txt").is_file() {
                ModelFormat::Text
            } else {
                return Err(ColmapError::NoModelFound {
                    dir: dir.to_path_buf(),
                });
            }
        }
        f => f,
    };
    let ext = if format == ModelFormat::Binary { "bin" } else { "txt" };
    let cameras_path = dir.join(format!("cameras.{ext}"));
    let images_path = dir.join(format!("images.{ext}"));
    let points_path = dir.join(format!("points3D.{ext}"));
    for p in [&cameras_path, &images_path, &points_path] {
        if !p.is_file() {
            return Err(ColmapError::MissingFile { path: p.clone() });
        }
    }

    let (cameras, frames_raw, points) = match format {
        ModelFormat::Binary => (
            read_cameras_bin(&cameras_path)?,
            read_images_bin(&images_path)?,
            read_points_bin(&points_path)?,
        ),
        ModelFormat::Text => (
            read_cameras_txt(&cameras_path)?,
            read_images_txt(&images_path)?,
            read_points_txt(&points_path)?,
        ),
        ModelFormat::Auto => unreachable!(),
    };

    // Join images with intrinsics and normalize rotations.
    let mut frames = Vec::with_capacity(frames_raw.len());
    let mut seen = HashSet::new();
    for raw in frames_raw {
        if !seen.insert(raw.image_id) {
            return Err(ColmapError::Invalid {
                path: images_path.clone(),
                msg: format!("duplicate image id {}", raw.image_id),
            });
        }
        let intrinsics = cameras.get(&raw.camera_id).ok_or_else(|| ColmapError::Invalid {
            path: images_path.clone(),
            msg: format!(
                "image {} references unknown camera id {}",
                raw.image_id, raw.camera_id
            ),
        })?;
        let norm = raw.rotation.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(ColmapError::Invalid {
                path: images_path.clone(),
                msg: format!("image {}: degenerate quaternion", raw.image_id),
            });
        }
        frames.push(CameraFrame {
            frame_id: raw.image_id,
            intrinsics: intrinsics.clone(),
            rotation: raw.rotation / norm,
            translation: raw.translation,
            image_name: raw.image_name,
        });
    }
    for p in &points {
        p.validate()?;
    }
    Ok((frames, points))
}

/// Write a COLMAP sparse model (one camera per frame, empty observations).
///
/// Output parses back with [`parse_colmap_model`] and with the reference
/// COLMAP readers. All records are validated before anything is written.
pub fn write_colmap_model(
    frames: &[CameraFrame],
    points: &[SparsePoint],
    dir: &Path,
    format: ModelFormat,
) -> Result<(), ColmapError> {
    let format = match format {
        ModelFormat::Auto => ModelFormat::Binary,
        f => f,
    };
    let mut seen = HashSet::new();
    for f in frames {
        f.validate()?;
        if !seen.insert(f.frame_id) {
            return Err(ColmapError::Validation(format!(
                "duplicate frame id {}",
                f.frame_id
            )));
        }
    }
    for p in points {
        p.validate()?;
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ext = if format == ModelFormat::Binary { "bin" } else { "txt" };
    let cameras_path = dir.join(format!("cameras.{ext}"));
    let images_path = dir.join(format!("images.{ext}"));
    let points_path = dir.join(format!("points3D.{ext}"));
    match format {
        ModelFormat::Binary => {
            write_cameras_bin(frames, &cameras_path)?;
            write_images_bin(frames, &images_path)?;
            write_points_bin(points, &points_path)?;
        }
        ModelFormat::Text => {
            write_cameras_txt(frames, &cameras_path)?;
            write_images_txt(frames, &images_path)?;
            write_points_txt(points, &points_path)?;
        }
        ModelFormat::Auto => unreachable!(),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary layer
// ---------------------------------------------------------------------------

/// Reader wrapper that tracks the byte offset for truncation reports.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

fn open_counting(path: &Path) -> Result<CountingReader<BufReader<File>>, ColmapError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(CountingReader {
        inner: BufReader::new(file),
        offset: 0,
    })
}

/// Map an I/O failure mid-record to a truncation error when it is EOF.
fn record_err(
    path: &Path,
    index: u64,
    count: u64,
    offset: u64,
) -> impl FnOnce(io::Error) -> ColmapError + '_ {
    move |source| {
        if source.kind() == io::ErrorKind::UnexpectedEof {
            ColmapError::Truncated {
                path: path.to_path_buf(),
                index,
                count,
                offset,
            }
        } else {
            ColmapError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

struct RawImage {
    image_id: u32,
    rotation: Quaternion<f64>,
    translation: Vector3<f64>,
    camera_id: u32,
    image_name: String,
}

fn read_cameras_bin(path: &Path) -> Result<HashMap<u32, CameraIntrinsics>, ColmapError> {
    let mut r = open_counting(path)?;
    let count = r.read_u64::<LittleEndian>().map_err(io_err(path))?;
    let mut cameras = HashMap::with_capacity(count as usize);
    for index in 0..count {
        let res: io::Result<_> = (|| {
            let camera_id = r.read_i32::<LittleEndian>()?;
            let model_id = r.read_i32::<LittleEndian>()?;
            let width = r.read_u64::<LittleEndian>()?;
            let height = r.read_u64::<LittleEndian>()?;
            Ok((camera_id, model_id, width, height))
        })();
        let (camera_id, model_id, width, height) =
            res.map_err(record_err(path, index, count, r.offset))?;
        let model = CameraModel::from_id(model_id).ok_or_else(|| {
            ColmapError::UnsupportedCameraModel {
                id: model_id,
                name: colmap_model_name(model_id),
                path: path.to_path_buf(),
            }
        })?;
        let mut params = vec![0.0; model.num_params()];
        for p in params.iter_mut() {
            *p = r
                .read_f64::<LittleEndian>()
                .map_err(record_err(path, index, count, r.offset))?;
        }
        if camera_id < 0 {
            return Err(ColmapError::Invalid {
                path: path.to_path_buf(),
                msg: format!("negative camera id {camera_id}"),
            });
        }
        if cameras
            .insert(
                camera_id as u32,
                CameraIntrinsics::from_params(model, width as u32, height as u32, &params),
            )
            .is_some()
        {
            return Err(ColmapError::Invalid {
                path: path.to_path_buf(),
                msg: format!("duplicate camera id {camera_id}"),
            });
        }
    }
    Ok(cameras)
}

fn read_images_bin(path: &Path) -> Result<Vec<RawImage>, ColmapError> {
    let mut r = open_counting(path)?;
    let count = r.read_u64::<LittleEndian>().map_err(io_err(path))?;
    let mut images = Vec::with_capacity(count as usize);
    for index in 0..count {
        let res: io::Result<RawImage> = (|| {
            let image_id = r.read_i32::<LittleEndian>()?;
            let qw = r.read_f64::<LittleEndian>()?;
            let qx = r.read_f64::<LittleEndian>()?;
            let qy = r.read_f64::<LittleEndian>()?;
            let qz = r.read_f64::<LittleEndian>()?;
            let tx = r.read_f64::<LittleEndian>()?;
            let ty = r.read_f64::<LittleEndian>()?;
            let tz = r.read_f64::<LittleEndian>()?;
            let camera_id = r.read_i32::<LittleEndian>()?;
            let mut name = Vec::new();
            loop {
                let b = r.read_u8()?;
                if b == 0 {
                    break;
                }
                name.push(b);
            }
            let n_points2d = r.read_u64::<LittleEndian>()?;
            // Skip (x, y, point3d_id) triples.
            for _ in 0..n_points2d {
                r.read_f64::<LittleEndian>()?;
                r.read_f64::<LittleEndian>()?;
                r.read_i64::<LittleEndian>()?;
            }
            Ok(RawImage {
                image_id: image_id.max(0) as u32,
                rotation: Quaternion::new(qw, qx, qy, qz),
                translation: Vector3::new(tx, ty, tz),
                camera_id: camera_id.max(0) as u32,
                image_name: String::from_utf8_lossy(&name).into_owned(),
            })
        })();
        images.push(res.map_err(record_err(path, index, count, r.offset))?);
    }
    Ok(images)
}

fn read_points_bin(path: &Path) -> Result<Vec<SparsePoint>, ColmapError> {
    let mut r = open_counting(path)?;
    let count = r.read_u64::<LittleEndian>().map_err(io_err(path))?;
    let mut points = Vec::with_capacity(count.min(1 << 24) as usize);
    for index in 0..count {
        let res: io::Result<SparsePoint> = (|| {
            let _id = r.read_u64::<LittleEndian>()?;
            let x = r.read_f64::<LittleEndian>()?;
            let y = r.read_f64::<LittleEndian>()?;
            let z = r.read_f64::<LittleEndian>()?;
            let red = r.read_u8()?;
            let green = r.read_u8()?;
            let blue = r.read_u8()?;
            let _error = r.read_f64::<LittleEndian>()?;
            let track_len = r.read_u64::<LittleEndian>()?;
            for _ in 0..track_len {
                r.read_i32::<LittleEndian>()?;
                r.read_i32::<LittleEndian>()?;
            }
            Ok(SparsePoint {
                position: Vector3::new(x, y, z),
                color: [red, green, blue],
            })
        })();
        points.push(res.map_err(record_err(path, index, count, r.offset))?);
    }
    Ok(points)
}

fn write_cameras_bin(frames: &[CameraFrame], path: &Path) -> Result<(), ColmapError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let res: io::Result<()> = (|| {
        w.write_u64::<LittleEndian>(frames.len() as u64)?;
        for f in frames {
            w.write_i32::<LittleEndian>(f.frame_id as i32)?;
            w.write_i32::<LittleEndian>(f.intrinsics.model.id())?;
            w.write_u64::<LittleEndian>(f.intrinsics.width as u64)?;
            w.write_u64::<LittleEndian>(f.intrinsics.height as u64)?;
            for p in f.intrinsics.params() {
                w.write_f64::<LittleEndian>(p)?;
            }
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

fn write_images_bin(frames: &[CameraFrame], path: &Path) -> Result<(), ColmapError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let res: io::Result<()> = (|| {
        w.write_u64::<LittleEndian>(frames.len() as u64)?;
        for f in frames {
            w.write_i32::<LittleEndian>(f.frame_id as i32)?;
            w.write_f64::<LittleEndian>(f.rotation.w)?;
            w.write_f64::<LittleEndian>(f.rotation.i)?;
            w.write_f64::<LittleEndian>(f.rotation.j)?;
            w.write_f64::<LittleEndian>(f.rotation.k)?;
            for v in f.translation.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
            w.write_i32::<LittleEndian>(f.frame_id as i32)?; // camera id
            w.write_all(f.image_name.as_bytes())?;
            w.write_u8(0)?;
            w.write_u64::<LittleEndian>(0)?; // no 2D observations
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

fn write_points_bin(points: &[SparsePoint], path: &Path) -> Result<(), ColmapError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let res: io::Result<()> = (|| {
        w.write_u64::<LittleEndian>(points.len() as u64)?;
        for (i, p) in points.iter().enumerate() {
            w.write_u64::<LittleEndian>(i as u64 + 1)?;
            for v in p.position.iter() {
                w.write_f64::<LittleEndian>(*v)?;
            }
            w.write_all(&p.color)?;
            w.write_f64::<LittleEndian>(0.0)?; // reprojection error
            w.write_u64::<LittleEndian>(0)?; // empty track
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Text layer
// ---------------------------------------------------------------------------

fn text_err(path: &Path, line: usize, msg: impl Into<String>) -> ColmapError {
    ColmapError::TextParse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    tok: Option<&str>,
    what: &str,
    path: &Path,
    line: usize,
) -> Result<T, ColmapError> {
    let tok = tok.ok_or_else(|| text_err(path, line, format!("missing field {what}")))?;
    tok.parse()
        .map_err(|_| text_err(path, line, format!("cannot parse {what} from {tok:?}")))
}

/// Lines of a text model file with 1-based numbers, comments stripped.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>, ColmapError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim_start().starts_with('#') {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

fn read_cameras_txt(path: &Path) -> Result<HashMap<u32, CameraIntrinsics>, ColmapError> {
    let mut cameras = HashMap::new();
    for (lineno, line) in data_lines(path)? {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let camera_id: u32 = parse_field(it.next(), "CAMERA_ID", path, lineno)?;
        let model_name: String = parse_field(it.next(), "MODEL", path, lineno)?;
        let model = CameraModel::from_name(&model_name).ok_or_else(|| {
            ColmapError::UnsupportedCameraModel {
                id: -1,
                name: model_name.clone(),
                path: path.to_path_buf(),
            }
        })?;
        let width: u32 = parse_field(it.next(), "WIDTH", path, lineno)?;
        let height: u32 = parse_field(it.next(), "HEIGHT", path, lineno)?;
        let mut params = Vec::with_capacity(model.num_params());
        for k in 0..model.num_params() {
            params.push(parse_field(it.next(), &format!("PARAMS[{k}]"), path, lineno)?);
        }
        if cameras
            .insert(camera_id, CameraIntrinsics::from_params(model, width, height, &params))
            .is_some()
        {
            return Err(text_err(path, lineno, format!("duplicate camera id {camera_id}")));
        }
    }
    Ok(cameras)
}

fn read_images_txt(path: &Path) -> Result<Vec<RawImage>, ColmapError> {
    let lines = data_lines(path)?;
    let mut images = Vec::new();
    let mut iter = lines.into_iter();
    while let Some((lineno, line)) = iter.next() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let image_id: u32 = parse_field(it.next(), "IMAGE_ID", path, lineno)?;
        let qw: f64 = parse_field(it.next(), "QW", path, lineno)?;
        let qx: f64 = parse_field(it.next(), "QX", path, lineno)?;
        let qy: f64 = parse_field(it.next(), "QY", path, lineno)?;
        let qz: f64 = parse_field(it.next(), "QZ", path, lineno)?;
        let tx: f64 = parse_field(it.next(), "TX", path, lineno)?;
        let ty: f64 = parse_field(it.next(), "TY", path, lineno)?;
        let tz: f64 = parse_field(it.next(), "TZ", path, lineno)?;
        let camera_id: u32 = parse_field(it.next(), "CAMERA_ID", path, lineno)?;
        let image_name: String = parse_field(it.next(), "NAME", path, lineno)?;
        // The following line holds the 2D observations; it may be empty.
        let _ = iter.next();
        images.push(RawImage {
            image_id,
            rotation: Quaternion::new(qw, qx, qy, qz),
            translation: Vector3::new(tx, ty, tz),
            camera_id,
            image_name,
        });
    }
    Ok(images)
}

fn read_points_txt(path: &Path) -> Result<Vec<SparsePoint>, ColmapError> {
    let mut points = Vec::new();
    for (lineno, line) in data_lines(path)? {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let _id: u64 = parse_field(it.next(), "POINT3D_ID", path, lineno)?;
        let x: f64 = parse_field(it.next(), "X", path, lineno)?;
        let y: f64 = parse_field(it.next(), "Y", path, lineno)?;
        let z: f64 = parse_field(it.next(), "Z", path, lineno)?;
        let red: u8 = parse_field(it.next(), "R", path, lineno)?;
        let green: u8 = parse_field(it.next(), "G", path, lineno)?;
        let blue: u8 = parse_field(it.next(), "B", path, lineno)?;
        points.push(SparsePoint {
            position: Vector3::new(x, y, z),
            color: [red, green, blue],
        });
    }
    Ok(points)
}

fn write_cameras_txt(frames: &[CameraFrame], path: &Path) -> Result<(), ColmapError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let res: io::Result<()> = (|| {
        writeln!(w, "# Camera list with one line of data per camera:")?;
        writeln!(w, "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]")?;
        writeln!(w, "# Number of cameras: {}", frames.len())?;
        for f in frames {
            write!(
                w,
                "{} {} {} {}",
                f.frame_id,
                f.intrinsics.model.name(),
                f.intrinsics.width,
                f.intrinsics.height
            )?;
            for p in f.intrinsics.params() {
                write!(w, " {p}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

fn write_images_txt(frames: &[CameraFrame], path: &Path) -> Result<(), ColmapError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let res: io::Result<()> = (|| {
        writeln!(w, "# Image list with two lines of data per image:")?;
        writeln!(w, "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME")?;
        writeln!(w, "#   POINTS2D[] as (X, Y, POINT3D_ID)")?;
        writeln!(w, "# Number of images: {}", frames.len())?;
        for f in frames {
            let q = f.rotation;
            let t = f.translation;
            writeln!(
                w,
                "{} {} {} {} {} {} {} {} {} {}",
                f.frame_id, q.w, q.i, q.j, q.k, t.x, t.y, t.z, f.frame_id, f.image_name
            )?;
            writeln!(w)?; // no 2D observations
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

fn write_points_txt(points: &[SparsePoint], path: &Path) -> Result<(), ColmapError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let res: io::Result<()> = (|| {
        writeln!(w, "# 3D point list with one line of data per point:")?;
        writeln!(w, "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)")?;
        writeln!(w, "# Number of points: {}", points.len())?;
        for (i, p) in points.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {} {} {} {} 0",
                i + 1,
                p.position.x,
                p.position.y,
                p.position.z,
                p.color[0],
                p.color[1],
                p.color[2]
            )?;
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    pub(crate) fn sample_frame(id: u32) -> CameraFrame {
        let q = Quaternion::new(0.9, 0.1, -0.2, 0.3);
        CameraFrame {
            frame_id: id,
            intrinsics: CameraIntrinsics {
                model: CameraModel::Pinhole,
                width: 640,
                height: 480,
                fx: 500.25,
                fy: 499.75,
                cx: 320.0,
                cy: 240.0,
                radial_k: 0.0,
            },
            rotation: q / q.norm(),
            translation: Vector3::new(0.25, -1.5, 3.75),
            image_name: format!("frame_{id:04}.png"),
        }
    }

    fn sample_model() -> (Vec<CameraFrame>, Vec<SparsePoint>) {
        let frames = vec![sample_frame(1), sample_frame(2)];
        let points = vec![
            SparsePoint {
                position: Vector3::new(0.1, 0.2, 0.3),
                color: [255, 0, 0],
            },
            SparsePoint {
                position: Vector3::new(-1.0, 2.0, -3.0),
                color: [10, 200, 30],
            },
        ];
        (frames, points)
    }

    #[test]
    fn empty_model_roundtrips_in_both_formats() {
        for format in [ModelFormat::Binary, ModelFormat::Text] {
            let dir = tempdir().unwrap();
            write_colmap_model(&[], &[], dir.path(), format).unwrap();
            let (frames, points) = parse_colmap_model(dir.path(), format).unwrap();
            assert!(frames.is_empty());
            assert!(points.is_empty());
        }
    }

    #[test]
    fn binary_roundtrip_is_field_exact() {
        let (frames, points) = sample_model();
        let dir = tempdir().unwrap();
        write_colmap_model(&frames, &points, dir.path(), ModelFormat::Binary).unwrap();
        let (f2, p2) = parse_colmap_model(dir.path(), ModelFormat::Binary).unwrap();
        assert_eq!(frames, f2);
        assert_eq!(points, p2);
    }

    #[test]
    fn text_roundtrip_is_field_exact() {
        // Shortest-roundtrip float formatting makes even text exact.
        let (frames, points) = sample_model();
        let dir = tempdir().unwrap();
        write_colmap_model(&frames, &points, dir.path(), ModelFormat::Text).unwrap();
        let (f2, p2) = parse_colmap_model(dir.path(), ModelFormat::Text).unwrap();
        assert_eq!(frames, f2);
        assert_eq!(points, p2);
    }

    #[test]
    fn auto_prefers_binary_when_both_exist() {
        let (frames, points) = sample_model();
        let dir = tempdir().unwrap();
        write_colmap_model(&frames, &points, dir.path(), ModelFormat::Binary).unwrap();
        // Text copy with a different image name to tell the two apart.
        let mut tframes = frames.clone();
        tframes[0].image_name = "text_only.png".into();
        write_colmap_model(&tframes, &points, dir.path(), ModelFormat::Text).unwrap();
        let (parsed, _) = parse_colmap_model(dir.path(), ModelFormat::Auto).unwrap();
        assert_eq!(parsed[0].image_name, "frame_0001.png");
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempdir().unwrap();
        let (frames, points) = sample_model();
        write_colmap_model(&frames, &points, dir.path(), ModelFormat::Binary).unwrap();
        std::fs::remove_file(dir.path().join("points3D.bin")).unwrap();
        let err = parse_colmap_model(dir.path(), ModelFormat::Binary).unwrap_err();
        match err {
            ColmapError::MissingFile { path } => {
                assert!(path.to_string_lossy().ends_with("points3D.bin"))
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_reports_second_record() {
        let (frames, points) = sample_model();
        let dir = tempdir().unwrap();
        write_colmap_model(&frames, &points, dir.path(), ModelFormat::Binary).unwrap();
        let path = dir.path().join("cameras.bin");
        let bytes = std::fs::read(&path).unwrap();
        // Count (8) + one full record: 4 + 4 + 8 + 8 + 4 * 8 = 56 bytes.
        std::fs::write(&path, &bytes[..8 + 56]).unwrap();
        let err = parse_colmap_model(dir.path(), ModelFormat::Binary).unwrap_err();
        match err {
            ColmapError::Truncated { index, count, .. } => {
                assert_eq!(index, 1);
                assert_eq!(count, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unsupported_model_id_is_named() {
        let (frames, points) = sample_model();
        let dir = tempdir().unwrap();
        write_colmap_model(&frames, &points, dir.path(), ModelFormat::Binary).unwrap();
        let path = dir.path().join("cameras.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[12] = 4; // model id of the first camera -> OPENCV
        std::fs::write(&path, bytes).unwrap();
        let err = parse_colmap_model(dir.path(), ModelFormat::Binary).unwrap_err();
        match err {
            ColmapError::UnsupportedCameraModel { id, name, .. } => {
                assert_eq!(id, 4);
                assert_eq!(name, "OPENCV");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_unit_quaternion_is_rejected_before_writing() {
        let (mut frames, points) = sample_model();
        frames[1].rotation = Quaternion::new(1.0, 0.5, 0.0, 0.0);
        let dir = tempdir().unwrap();
        let err = write_colmap_model(&frames, &points, dir.path(), ModelFormat::Binary).unwrap_err();
        assert!(matches!(err, ColmapError::Validation(_)));
        assert!(!dir.path().join("cameras.bin").exists());
    }

    #[test]
    fn simple_radial_roundtrips_distortion() {
        let mut frame = sample_frame(7);
        frame.intrinsics.model = CameraModel::SimpleRadial;
        frame.intrinsics.fy = frame.intrinsics.fx;
        frame.intrinsics.radial_k = -0.034;
        let dir = tempdir().unwrap();
        write_colmap_model(&[frame.clone()], &[], dir.path(), ModelFormat::Binary).unwrap();
        let (frames, _) = parse_colmap_model(dir.path(), ModelFormat::Auto).unwrap();
        assert_eq!(frames[0], frame);
        assert!(frames[0].intrinsics.has_distortion());
    }
}
