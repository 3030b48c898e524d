//! Binary dataset file.
//!
//! Header: `PAADDATA`, u16 version, u32 frame count, u16 image rows,
//! u16 image cols, u32 LiDAR length, u16 horizon. Each record: u32 episode,
//! u32 index, f64 timestamp, u8 flag bits, 3 x f64 pose, image bytes,
//! LiDAR f32s, horizon x (f32, f32) waypoints, horizon label bytes.
//! Everything little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{PaadError, Result};
use crate::fieldsim::{FrameFlags, GrayImage, ObservationFrame, Pose};
use crate::geometry::PlannedPath;

const MAGIC: &[u8; 8] = b"PAADDATA";
pub const DATASET_VERSION: u16 = 1;

/// Shapes shared by every record of a file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub frames: u32,
    pub image_rows: u16,
    pub image_cols: u16,
    pub lidar_len: u32,
    pub horizon: u16,
}

impl DatasetHeader {
    /// Header describing `frames`; empty sets get the supplied default shapes.
    pub fn for_frames(frames: &[ObservationFrame], default: (usize, usize, usize, usize)) -> Result<Self> {
        let (rows, cols, lidar, horizon) = match frames.first() {
            Some(f) => (f.image.rows, f.image.cols, f.lidar.len(), f.labels.len()),
            None => default,
        };
        let fits = |v: usize, max: usize| -> Result<()> {
            if v > max {
                Err(PaadError::Input(format!("dimension {v} does not fit the dataset header")))
            } else {
                Ok(())
            }
        };
        fits(rows, u16::MAX as usize)?;
        fits(cols, u16::MAX as usize)?;
        fits(horizon, u16::MAX as usize)?;
        fits(frames.len(), u32::MAX as usize)?;
        Ok(DatasetHeader {
            frames: frames.len() as u32,
            image_rows: rows as u16,
            image_cols: cols as u16,
            lidar_len: lidar as u32,
            horizon: horizon as u16,
        })
    }
}

fn flag_bits(f: &FrameFlags) -> u8 {
    (f.camera_occluded as u8)
        | (f.lidar_occluded as u8) << 1
        | (f.heading_corrupted as u8) << 2
        | (f.failed as u8) << 3
}

fn flags_from(bits: u8) -> Result<FrameFlags> {
    if bits >> 4 != 0 {
        return Err(PaadError::Format(format!("unknown frame flag bits {bits:#x}")));
    }
    Ok(FrameFlags {
        camera_occluded: bits & 1 != 0,
        lidar_occluded: bits & 2 != 0,
        heading_corrupted: bits & 4 != 0,
        failed: bits & 8 != 0,
    })
}

pub fn write_dataset<W: Write>(frames: &[ObservationFrame], header: &DatasetHeader, mut w: W) -> Result<()> {
    if header.frames as usize != frames.len() {
        return Err(PaadError::Input("header count does not match frames".into()));
    }
    w.write_all(MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&header.frames.to_le_bytes())?;
    w.write_all(&header.image_rows.to_le_bytes())?;
    w.write_all(&header.image_cols.to_le_bytes())?;
    w.write_all(&header.lidar_len.to_le_bytes())?;
    w.write_all(&header.horizon.to_le_bytes())?;
    let t = header.horizon as usize;
    for (i, f) in frames.iter().enumerate() {
        let shape_ok = f.image.rows == header.image_rows as usize
            && f.image.cols == header.image_cols as usize
            && f.image.pixels.len() == f.image.rows * f.image.cols
            && f.lidar.len() == header.lidar_len as usize
            && f.labels.len() == t
            && f.path.len() == t;
        if !shape_ok {
            return Err(PaadError::Dimension(format!("frame {i} does not match the dataset header")));
        }
        w.write_all(&f.episode.to_le_bytes())?;
        w.write_all(&f.index.to_le_bytes())?;
        w.write_all(&f.timestamp.to_le_bytes())?;
        w.write_all(&[flag_bits(&f.flags)])?;
        for v in [f.pose.x, f.pose.y, f.pose.heading] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&f.image.pixels)?;
        for r in &f.lidar {
            w.write_all(&r.to_le_bytes())?;
        }
        for [x, y] in &f.path.waypoints {
            w.write_all(&x.to_le_bytes())?;
            w.write_all(&y.to_le_bytes())?;
        }
        w.write_all(&f.labels)?;
    }
    w.flush()?;
    Ok(())
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.0
            .read_exact(buf)
            .map_err(|_| PaadError::Format(format!("dataset truncated while reading {what}")))
    }

    fn arr<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, what)?;
        Ok(b)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.arr(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.arr(what)?))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.arr(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.arr(what)?))
    }
}

pub fn read_dataset<R: Read>(r: R) -> Result<(DatasetHeader, Vec<ObservationFrame>)> {
    let mut r = In(r);
    if &r.arr::<8>("magic")? != MAGIC {
        return Err(PaadError::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(PaadError::Format(format!("unsupported dataset version {version}")));
    }
    let header = DatasetHeader {
        frames: r.u32("frame count")?,
        image_rows: r.u16("image rows")?,
        image_cols: r.u16("image cols")?,
        lidar_len: r.u32("LiDAR length")?,
        horizon: r.u16("horizon")?,
    };
    let (rows, cols) = (header.image_rows as usize, header.image_cols as usize);
    let t = header.horizon as usize;
    let mut frames = Vec::with_capacity((header.frames as usize).min(1 << 16));
    for _ in 0..header.frames {
        let episode = r.u32("episode")?;
        let index = r.u32("index")?;
        let timestamp = r.f64("timestamp")?;
        let flags = flags_from(r.arr::<1>("flags")?[0])?;
        let pose = Pose {
            x: r.f64("pose")?,
            y: r.f64("pose")?,
            heading: r.f64("pose")?,
        };
        let mut pixels = vec![0u8; rows * cols];
        r.fill(&mut pixels, "image")?;
        let lidar = (0..header.lidar_len)
            .map(|_| r.f32("LiDAR"))
            .collect::<Result<Vec<_>>>()?;
        let waypoints = (0..t)
            .map(|_| Ok([r.f32("waypoint")?, r.f32("waypoint")?]))
            .collect::<Result<Vec<_>>>()?;
        let mut labels = vec![0u8; t];
        r.fill(&mut labels, "labels")?;
        if labels.iter().any(|&l| l > 1) {
            return Err(PaadError::Format("labels must be 0 or 1".into()));
        }
        frames.push(ObservationFrame {
            episode,
            index,
            timestamp,
            image: GrayImage { rows, cols, pixels },
            lidar,
            path: PlannedPath::new(waypoints),
            labels,
            flags,
            pose,
        });
    }
    let mut extra = [0u8; 1];
    if r.0.read(&mut extra)? != 0 {
        return Err(PaadError::Format(format!(
            "dataset declares {} frames but has trailing bytes",
            header.frames
        )));
    }
    Ok((header, frames))
}

pub fn save_dataset(path: &Path, frames: &[ObservationFrame], header: &DatasetHeader) -> Result<()> {
    write_dataset(frames, header, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<ObservationFrame>)> {
    read_dataset(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsim::{run_episode, EpisodeConfig, WorldConfig};

    #[test]
    fn round_trip_is_byte_faithful() {
        let ep = EpisodeConfig {
            frames: 12,
            ..EpisodeConfig::default()
        };
        let frames = run_episode(&WorldConfig::default(), &ep, 3).unwrap();
        let header = DatasetHeader::for_frames(&frames, (0, 0, 0, 0)).unwrap();
        let mut a = Vec::new();
        write_dataset(&frames, &header, &mut a).unwrap();
        let (h2, back) = read_dataset(a.as_slice()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(back, frames);
        let mut b = Vec::new();
        write_dataset(&back, &h2, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let header = DatasetHeader::for_frames(&[], (60, 80, 1081, 10)).unwrap();
        let mut a = Vec::new();
        write_dataset(&[], &header, &mut a).unwrap();
        assert_eq!(a.len(), 8 + 2 + 4 + 2 + 2 + 4 + 2);
        let (h, frames) = read_dataset(a.as_slice()).unwrap();
        assert_eq!((h.frames, frames.len()), (0, 0));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let ep = EpisodeConfig {
            frames: 2,
            ..EpisodeConfig::default()
        };
        let frames = run_episode(&WorldConfig::default(), &ep, 0).unwrap();
        let header = DatasetHeader::for_frames(&frames, (0, 0, 0, 0)).unwrap();
        let mut a = Vec::new();
        write_dataset(&frames, &header, &mut a).unwrap();
        assert!(matches!(read_dataset(&a[..a.len() - 1]), Err(PaadError::Format(_))));
    }
}
