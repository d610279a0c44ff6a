//! Binary netpbm images: P5 (gray) and P6 (RGB), maxval 255.

use std::path::Path;

use super::DataError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    /// Row-major samples, channels fastest.
    pub data: Vec<u8>,
}

impl Pnm {
    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn rgb(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            channels: 3,
            data,
        }
    }

    /// RGB samples scaled to `[0,1]`; gray images are replicated to 3 channels.
    pub fn to_unit_rgb(&self) -> Vec<f64> {
        match self.channels {
            3 => self.data.iter().map(|&v| v as f64 / 255.0).collect(),
            _ => self
                .data
                .iter()
                .flat_map(|&v| [v as f64 / 255.0; 3])
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
        read_pnm(&bytes).map_err(|e| match e {
            DataError::Pnm(m) => DataError::Pnm(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, write_pnm(self)).map_err(|e| DataError::io(path, e))
    }
}

/// Parses a P5/P6 file. Header comments (`#` to end of line) are allowed.
pub fn read_pnm(bytes: &[u8]) -> Result<Pnm, DataError> {
    let bad = |m: &str| DataError::Pnm(m.to_string());
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(bad("expected P5 or P6 magic")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad header field"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(DataError::Pnm(format!("maxval {maxval} unsupported (need 255)")));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after header"));
    }
    pos += 1;
    let len = width * height * channels;
    let data = bytes
        .get(pos..pos + len)
        .ok_or_else(|| DataError::Pnm(format!("truncated pixel data: need {len} bytes")))?
        .to_vec();
    Ok(Pnm {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pnm(img: &Pnm) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let g = Pnm::gray(3, 2, vec![0, 1, 2, 128, 254, 255]);
        assert_eq!(read_pnm(&write_pnm(&g)).unwrap(), g);
        let c = Pnm::rgb(1, 2, vec![9, 8, 7, 6, 5, 4]);
        assert_eq!(read_pnm(&write_pnm(&c)).unwrap(), c);
    }

    #[test]
    fn header_comments() {
        let mut bytes = b"P5 # gray\n# size next\n2 1\n255\n".to_vec();
        bytes.extend([10, 20]);
        assert_eq!(read_pnm(&bytes).unwrap().data, vec![10, 20]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_pnm(b"P3\n1 1\n255\n").is_err());
        assert!(read_pnm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(read_pnm(b"P5\n2 2\n255\n\0").is_err());
    }
}
