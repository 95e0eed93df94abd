//! WAV input/output and atomic file writes.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Encodes `[channel][sample]` data as an interleaved WAV image.
pub fn wav_bytes(channels: &[Vec<f64>], fs: u32, format: SampleFormat) -> Result<Vec<u8>> {
    let n_ch = channels.len();
    if n_ch == 0 || n_ch > u16::MAX as usize {
        return Err(Error::Data(format!("cannot write {n_ch} channels")));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::Data("channels differ in length".into()));
    }
    let spec = hound::WavSpec {
        channels: n_ch as u16,
        sample_rate: fs,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec)?;
        for t in 0..len {
            for ch in channels {
                let v = ch[t];
                match format {
                    SampleFormat::Pcm16 => w.write_sample((v.clamp(-1.0, 1.0) * 32767.0).round() as i16)?,
                    SampleFormat::Float32 => w.write_sample(v as f32)?,
                }
            }
        }
        w.finalize()?;
    }
    Ok(buf.into_inner())
}

/// Reads a WAV file into `[channel][sample]` and the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, u32)> {
    decode_wav(hound::WavReader::open(path)?)
}

/// [`read_wav`] over an in-memory file.
pub fn read_wav_bytes(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, u32)> {
    decode_wav(hound::WavReader::new(Cursor::new(bytes))?)
}

fn decode_wav<R: std::io::Read>(mut r: hound::WavReader<R>) -> Result<(Vec<Vec<f64>>, u32)> {
    let spec = r.spec();
    let n_ch = spec.channels as usize;
    let flat: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, 16) => {
            r.samples::<i16>().map(|s| s.map(|v| v as f64 / 32767.0)).collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => return Err(Error::Data(format!("unsupported WAV encoding {fmt:?} {bits}-bit"))),
    };
    let mut out = vec![Vec::with_capacity(flat.len() / n_ch.max(1)); n_ch];
    for (i, v) in flat.into_iter().enumerate() {
        out[i % n_ch].push(v);
    }
    Ok((out, spec.sample_rate))
}

/// Collects artifacts in memory and publishes them together: each file is
/// written to a temporary sibling and renamed into place only after every
/// temporary write succeeded.
#[derive(Debug, Default)]
pub struct ArtifactSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|f| f.0.as_path())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.0 == Path::new(name)).map(|f| f.1.as_slice())
    }

    pub fn commit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut staged = Vec::with_capacity(self.files.len());
        let cleanup = |staged: &[(PathBuf, PathBuf)]| {
            for (tmp, _) in staged {
                let _ = fs::remove_file(tmp);
            }
        };
        for (name, bytes) in &self.files {
            let dest = dir.join(name);
            let tmp = dir.join(format!(".{}.tmp", name.display()));
            let res = (|| -> std::io::Result<()> {
                let mut f = fs::File::create(&tmp)?;
                f.write_all(bytes)?;
                f.sync_all()
            })();
            if let Err(e) = res {
                let _ = fs::remove_file(&tmp);
                cleanup(&staged);
                return Err(e.into());
            }
            staged.push((tmp, dest));
        }
        for (tmp, dest) in &staged {
            fs::rename(tmp, dest)?;
        }
        Ok(staged.into_iter().map(|s| s.1).collect())
    }
}
