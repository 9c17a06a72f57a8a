//! YUV4MPEG2 streams, 8-bit 4:2:0 only.

use std::path::Path;

use crate::error::{format_err, Error, Result};
use crate::pipeline::{Frame, Resolution};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::picture::to_u8;

const MAGIC: &str = "YUV4MPEG2";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    /// Header tokens after the magic, in file order (including `W` and `H`).
    pub tokens: Vec<String>,
}

impl Y4mHeader {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            tokens: vec![
                format!("W{width}"),
                format!("H{height}"),
                "F25:1".into(),
                "Ip".into(),
                "A1:1".into(),
                "C420jpeg".into(),
            ],
        }
    }

    /// Same parameters at another resolution.
    pub fn resized(&self, res: Resolution) -> Self {
        let tokens = self
            .tokens
            .iter()
            .map(|t| match t.as_bytes()[0] {
                b'W' => format!("W{}", res.width),
                b'H' => format!("H{}", res.height),
                _ => t.clone(),
            })
            .collect();
        Self { width: res.width, height: res.height, tokens }
    }

    pub fn frame_bytes(&self) -> usize {
        let c = Resolution::new(self.width, self.height).chroma();
        self.width * self.height + 2 * c.width * c.height
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4mFrame {
    /// Tokens after `FRAME`, usually none.
    pub params: Vec<String>,
    /// Y, then U, then V planes.
    pub data: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Y4m {
    pub header: Y4mHeader,
    pub frames: Vec<Y4mFrame>,
}

fn take_line<'a>(bytes: &'a [u8], pos: &mut usize, what: &str) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| format_err!("unterminated {what} line"))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| format_err!("{what} line is not ASCII"))
}

impl Y4m {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let line = take_line(bytes, &mut pos, "stream header")?;
        let mut it = line.split(' ');
        if it.next() != Some(MAGIC) {
            return Err(format_err!("not a {MAGIC} stream"));
        }
        let tokens: Vec<String> = it.map(str::to_string).collect();
        let (mut width, mut height) = (0, 0);
        for t in &tokens {
            let (key, val) = t.split_at(1.min(t.len()));
            match key {
                "W" => width = val.parse().map_err(|_| format_err!("bad width `{val}`"))?,
                "H" => height = val.parse().map_err(|_| format_err!("bad height `{val}`"))?,
                "C" if !matches!(val, "420" | "420jpeg" | "420paldv" | "420mpeg2") => {
                    return Err(format_err!("unsupported colour space C{val} (8-bit 4:2:0 only)"));
                }
                "" => return Err(format_err!("empty header token")),
                _ => {}
            }
        }
        if width == 0 || height == 0 {
            return Err(format_err!("stream header lacks W/H"));
        }
        let header = Y4mHeader { width, height, tokens };
        let size = header.frame_bytes();
        let mut frames = Vec::new();
        while pos < bytes.len() {
            let line = take_line(bytes, &mut pos, "frame header")?;
            let mut it = line.split(' ');
            if it.next() != Some("FRAME") {
                return Err(format_err!("expected FRAME, found `{line}`"));
            }
            let params = it.map(str::to_string).collect();
            let data =
                bytes.get(pos..pos + size).ok_or_else(|| format_err!("truncated frame {}", frames.len()))?.to_vec();
            pos += size;
            frames.push(Y4mFrame { params, data });
        }
        Ok(Self { header, frames })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.frames.len() * (6 + self.header.frame_bytes()));
        out.extend_from_slice(MAGIC.as_bytes());
        for t in &self.header.tokens {
            out.push(b' ');
            out.extend_from_slice(t.as_bytes());
        }
        out.push(b'\n');
        for f in &self.frames {
            out.extend_from_slice(b"FRAME");
            for p in &f.params {
                out.push(b' ');
                out.extend_from_slice(p.as_bytes());
            }
            out.push(b'\n');
            out.extend_from_slice(&f.data);
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::parse(&bytes).map_err(|e| e.at(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at(path))
    }

    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.header.width, self.header.height)
    }

    pub fn decode<T: Scalar>(&self, i: usize) -> Result<Frame<T>> {
        let res = self.resolution();
        let c = res.chroma();
        let data = &self.frames[i].data;
        let (ny, nc) = (res.width * res.height, c.width * c.height);
        let plane = |bytes: &[u8], r: Resolution| {
            Tensor::plane(r.height, r.width, bytes.iter().map(|&b| T::lit(b as f64 / 255.0)).collect())
        };
        Frame::new(plane(&data[..ny], res)?, plane(&data[ny..ny + nc], c)?, plane(&data[ny + nc..ny + 2 * nc], c)?)
    }

    pub fn encode<T: Scalar>(frame: &Frame<T>) -> Y4mFrame {
        let data = frame.planes().into_iter().flat_map(|p| p.data().iter().map(|v| to_u8(v.as_f64()))).collect();
        Y4mFrame { params: Vec::new(), data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<u8> {
        let header = Y4mHeader {
            width: 5,
            height: 3,
            tokens: vec![
                "W5".into(),
                "H3".into(),
                "F30000:1001".into(),
                "It".into(),
                "C420mpeg2".into(),
                "XYSCSS=420MPEG2".into(),
            ],
        };
        let n = header.frame_bytes();
        assert_eq!(n, 15 + 2 * 6);
        let stream = Y4m {
            header,
            frames: vec![
                Y4mFrame { params: vec![], data: (0..n as u8).collect() },
                Y4mFrame { params: vec!["Ixyz".into()], data: (0..n as u8).rev().collect() },
            ],
        };
        stream.to_bytes()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let bytes = sample();
        let parsed = Y4m::parse(&bytes).unwrap();
        assert_eq!(parsed.frames.len(), 2);
        assert_eq!(parsed.resolution(), Resolution::new(5, 3));
        assert_eq!(parsed.to_bytes(), bytes);
        let f = parsed.decode::<f32>(1).unwrap();
        assert_eq!(Y4m::encode(&f).data, parsed.frames[1].data);
    }

    #[test]
    fn rejects_bad_streams() {
        let bytes = sample();
        assert!(Y4m::parse(&bytes[..bytes.len() - 1]).is_err());
        assert!(Y4m::parse(b"YUV4MPEG2 W4 H4 C444\n").is_err());
        assert!(Y4m::parse(b"YUV4MPEG3 W4 H4\n").is_err());
        assert!(Y4m::parse(b"YUV4MPEG2 F25:1\n").is_err());
    }
}
