//! On-disk feature-file formats.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "AMLF"
//! 4       2     format version, u16 = 1
//! 6       2     flags, u16 (bit 0: labels present, other bits must be 0)
//! 8       4     n, u32 (rows)
//! 12      4     d, u32 (columns)
//! 16      4     classes, u32 (0 when unlabeled)
//! 20      4nd   features, f32 row-major
//! ...     4n    labels, u32 (only when flag bit 0 is set)
//! ```
//!
//! The CSV variant starts with the header line
//! `n=<n>,d=<d>,labeled=<0|1>,classes=<N>` followed by one row per point,
//! features first and the label as the last column when labeled. Floats are
//! written with Rust's shortest round-trip formatting, so both formats
//! reproduce the `f32` payload bit-exactly.
//!
//! Parse failures report the byte offset of the offending field.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, FormatErrorKind, Result};
use crate::features::{FeatureMatrix, FeaturePool};

const MAGIC: &[u8; 4] = b"AMLF";
const VERSION: u16 = 1;
const FLAG_LABELS: u16 = 1;

fn format_err(offset: u64, kind: FormatErrorKind) -> Error {
    Error::FileFormat { offset, kind }
}

/// Encodes a pool in the binary format.
pub fn encode_feature_bytes(pool: &FeaturePool) -> Vec<u8> {
    let n = pool.len();
    let d = pool.dim();
    let labeled = pool.labels().is_some();
    let classes = pool.classes().unwrap_or(0) as u32;

    let mut out = Vec::with_capacity(20 + 4 * n * d + if labeled { 4 * n } else { 0 });
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&if labeled { FLAG_LABELS } else { 0 }.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&classes.to_le_bytes());
    for v in pool.features().data().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = pool.labels() {
        for &l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    out
}

/// Decodes the binary format. Rejects trailing bytes.
pub fn decode_feature_bytes(bytes: &[u8]) -> Result<FeaturePool> {
    let take = |offset: usize, len: usize| -> Result<&[u8]> {
        bytes
            .get(offset..offset + len)
            .ok_or_else(|| format_err(bytes.len() as u64, FormatErrorKind::Truncated))
    };

    if take(0, 4)? != MAGIC {
        return Err(format_err(0, FormatErrorKind::BadMagic));
    }
    let version = u16::from_le_bytes(take(4, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(format_err(4, FormatErrorKind::UnsupportedVersion(version)));
    }
    let flags = u16::from_le_bytes(take(6, 2)?.try_into().unwrap());
    if flags & !FLAG_LABELS != 0 {
        return Err(format_err(
            6,
            FormatErrorKind::Header(format!("unknown flag bits {flags:#06x}")),
        ));
    }
    let labeled = flags & FLAG_LABELS != 0;
    let n = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(take(12, 4)?.try_into().unwrap()) as usize;
    let classes = u32::from_le_bytes(take(16, 4)?.try_into().unwrap());
    if n == 0 || d == 0 {
        return Err(format_err(8, FormatErrorKind::EmptyPool));
    }
    if labeled && classes == 0 {
        return Err(format_err(
            16,
            FormatErrorKind::Header("labeled file with classes = 0".into()),
        ));
    }

    let mut flat = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let offset = 20 + 4 * i;
        let v = f32::from_le_bytes(take(offset, 4)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(offset as u64, FormatErrorKind::NonFinite));
        }
        flat.push(v);
    }
    let labels_offset = 20 + 4 * n * d;
    let labels = if labeled {
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let offset = labels_offset + 4 * i;
            let l = u32::from_le_bytes(take(offset, 4)?.try_into().unwrap());
            if l >= classes {
                return Err(format_err(
                    offset as u64,
                    FormatErrorKind::LabelOutOfRange { label: l, classes },
                ));
            }
            labels.push(l);
        }
        Some(labels)
    } else {
        None
    };

    let end = labels_offset + if labeled { 4 * n } else { 0 };
    if bytes.len() != end {
        return Err(format_err(
            end as u64,
            FormatErrorKind::Header(format!("{} trailing bytes", bytes.len() - end)),
        ));
    }

    let data = Array2::from_shape_vec((n, d), flat).expect("shape checked above");
    let features = FeatureMatrix::new(data)?;
    match labels {
        Some(l) => FeaturePool::labeled(features, l, classes as usize),
        None => Ok(FeaturePool::unlabeled(features)),
    }
}

/// Encodes a pool in the CSV variant.
pub fn encode_feature_csv(pool: &FeaturePool) -> String {
    let n = pool.len();
    let d = pool.dim();
    let labeled = pool.labels().is_some();
    let mut out = format!(
        "n={n},d={d},labeled={},classes={}\n",
        u8::from(labeled),
        pool.classes().unwrap_or(0)
    );
    for i in 0..n {
        let mut fields: Vec<String> = (0..d)
            .map(|t| pool.features().data()[[i, t]].to_string())
            .collect();
        if let Some(labels) = pool.labels() {
            fields.push(labels[i].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Decodes the CSV variant. Offsets in errors are byte positions in `text`.
pub fn decode_feature_csv(text: &str) -> Result<FeaturePool> {
    let mut lines = LineCursor::new(text);

    let (header, header_offset) = lines
        .next()
        .ok_or_else(|| format_err(0, FormatErrorKind::Header("missing header line".into())))?;
    let (n, d, labeled, classes) = parse_header(header, header_offset)?;
    if n == 0 || d == 0 {
        return Err(format_err(header_offset, FormatErrorKind::EmptyPool));
    }
    if labeled && classes == 0 {
        return Err(format_err(
            header_offset,
            FormatErrorKind::Header("labeled file with classes=0".into()),
        ));
    }

    let want = d + usize::from(labeled);
    let mut flat = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(if labeled { n } else { 0 });
    for row in 0..n {
        let (line, line_offset) = lines
            .next()
            .ok_or_else(|| format_err(text.len() as u64, FormatErrorKind::Truncated))?;
        let mut count = 0usize;
        for (field, offset) in FieldCursor::new(line, line_offset) {
            if count >= want {
                return Err(format_err(
                    offset,
                    FormatErrorKind::Field(format!("row {row} has more than {want} fields")),
                ));
            }
            if count < d {
                let v: f32 = field.trim().parse().map_err(|_| {
                    format_err(offset, FormatErrorKind::Field(format!("bad float {field:?}")))
                })?;
                if !v.is_finite() {
                    return Err(format_err(offset, FormatErrorKind::NonFinite));
                }
                flat.push(v);
            } else {
                let l: u32 = field.trim().parse().map_err(|_| {
                    format_err(offset, FormatErrorKind::Field(format!("bad label {field:?}")))
                })?;
                if l as usize >= classes {
                    return Err(format_err(
                        offset,
                        FormatErrorKind::LabelOutOfRange {
                            label: l,
                            classes: classes as u32,
                        },
                    ));
                }
                labels.push(l);
            }
            count += 1;
        }
        if count != want {
            return Err(format_err(
                line_offset,
                FormatErrorKind::Field(format!("row {row} has {count} fields, expected {want}")),
            ));
        }
    }
    if let Some((line, offset)) = lines.next() {
        if !line.trim().is_empty() {
            return Err(format_err(
                offset,
                FormatErrorKind::Header("trailing rows after declared n".into()),
            ));
        }
    }

    let data = Array2::from_shape_vec((n, d), flat).expect("row count enforced above");
    let features = FeatureMatrix::new(data)?;
    if labeled {
        FeaturePool::labeled(features, labels, classes)
    } else {
        Ok(FeaturePool::unlabeled(features))
    }
}

/// Writes the binary format.
pub fn write_feature_file<P: AsRef<Path>>(path: P, pool: &FeaturePool) -> Result<()> {
    std::fs::write(path, encode_feature_bytes(pool))?;
    Ok(())
}

/// Writes the CSV variant.
pub fn write_feature_csv<P: AsRef<Path>>(path: P, pool: &FeaturePool) -> Result<()> {
    std::fs::write(path, encode_feature_csv(pool))?;
    Ok(())
}

/// Reads either format, sniffing the binary magic first.
pub fn read_feature_file<P: AsRef<Path>>(path: P) -> Result<FeaturePool> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        return decode_feature_bytes(&bytes);
    }
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        format_err(
            e.valid_up_to() as u64,
            FormatErrorKind::Header("not valid UTF-8 and not the binary format".into()),
        )
    })?;
    decode_feature_csv(text)
}

fn parse_header(line: &str, offset: u64) -> Result<(usize, usize, bool, usize)> {
    let bad = |msg: String| format_err(offset, FormatErrorKind::Header(msg));
    let mut n = None;
    let mut d = None;
    let mut labeled = None;
    let mut classes = None;
    for part in line.trim().split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
        let value: u64 = value
            .parse()
            .map_err(|_| bad(format!("bad value in {part:?}")))?;
        match key {
            "n" => n = Some(value as usize),
            "d" => d = Some(value as usize),
            "labeled" => match value {
                0 => labeled = Some(false),
                1 => labeled = Some(true),
                other => return Err(bad(format!("labeled must be 0 or 1, got {other}"))),
            },
            "classes" => classes = Some(value as usize),
            other => return Err(bad(format!("unknown header key {other:?}"))),
        }
    }
    match (n, d, labeled, classes) {
        (Some(n), Some(d), Some(l), Some(c)) => Ok((n, d, l, c)),
        _ => Err(bad("header must declare n, d, labeled and classes".into())),
    }
}

/// Iterates lines along with the byte offset of each line start.
struct LineCursor<'a> {
    text: &'a str,
    offset: usize,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, offset: 0 }
    }
}

impl<'a> Iterator for LineCursor<'a> {
    type Item = (&'a str, u64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.offset >= self.text.len() {
            return None;
        }
        let start = self.offset;
        let rest = &self.text[start..];
        let (line, consumed) = match rest.find('\n') {
            Some(pos) => (&rest[..pos], pos + 1),
            None => (rest, rest.len()),
        };
        self.offset = start + consumed;
        Some((line.strip_suffix('\r').unwrap_or(line), start as u64))
    }
}

/// Iterates comma-separated fields with their byte offsets.
struct FieldCursor<'a> {
    line: &'a str,
    base: u64,
    pos: usize,
    done: bool,
}

impl<'a> FieldCursor<'a> {
    fn new(line: &'a str, base: u64) -> Self {
        Self {
            line,
            base,
            pos: 0,
            done: false,
        }
    }
}

impl<'a> Iterator for FieldCursor<'a> {
    type Item = (&'a str, u64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let rest = &self.line[self.pos..];
        let offset = self.base + self.pos as u64;
        match rest.find(',') {
            Some(comma) => {
                let field = &rest[..comma];
                self.pos += comma + 1;
                Some((field, offset))
            }
            None => {
                self.done = true;
                Some((rest, offset))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn pool(labeled: bool) -> FeaturePool {
        let data = Array2::from_shape_vec(
            (3, 2),
            vec![0.5f32, -1.25, 3.0e-3, 7.0, f32::MIN_POSITIVE, -0.0],
        )
        .unwrap();
        let features = FeatureMatrix::new(data).unwrap();
        if labeled {
            FeaturePool::labeled(features, vec![0, 2, 1], 3).unwrap()
        } else {
            FeaturePool::unlabeled(features)
        }
    }

    #[test]
    fn binary_round_trip_labeled_and_unlabeled() {
        for labeled in [true, false] {
            let p = pool(labeled);
            let decoded = decode_feature_bytes(&encode_feature_bytes(&p)).unwrap();
            assert_eq!(decoded, p);
        }
    }

    #[test]
    fn csv_round_trip_labeled_and_unlabeled() {
        for labeled in [true, false] {
            let p = pool(labeled);
            let decoded = decode_feature_csv(&encode_feature_csv(&p)).unwrap();
            assert_eq!(decoded, p);
        }
    }

    #[test]
    fn file_round_trip_sniffs_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = pool(true);

        let bin = dir.path().join("pool.bin");
        write_feature_file(&bin, &p).unwrap();
        assert_eq!(read_feature_file(&bin).unwrap(), p);

        let csv = dir.path().join("pool.csv");
        write_feature_csv(&csv, &p).unwrap();
        assert_eq!(read_feature_file(&csv).unwrap(), p);
    }

    fn expect_offset(err: Error, want: u64) {
        match err {
            Error::FileFormat { offset, .. } => assert_eq!(offset, want),
            other => panic!("expected FileFormat error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected_at_offset_zero() {
        let mut bytes = encode_feature_bytes(&pool(false));
        bytes[0] = b'X';
        expect_offset(decode_feature_bytes(&bytes).unwrap_err(), 0);
    }

    #[test]
    fn unsupported_version_names_offset_four() {
        let mut bytes = encode_feature_bytes(&pool(false));
        bytes[4] = 9;
        let err = decode_feature_bytes(&bytes).unwrap_err();
        match &err {
            Error::FileFormat {
                offset: 4,
                kind: FormatErrorKind::UnsupportedVersion(9),
            } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_file_end() {
        let bytes = encode_feature_bytes(&pool(false));
        let cut = &bytes[..bytes.len() - 3];
        expect_offset(decode_feature_bytes(cut).unwrap_err(), cut.len() as u64);
    }

    #[test]
    fn non_finite_payload_names_exact_offset() {
        let mut bytes = encode_feature_bytes(&pool(false));
        // Second feature of the second row: index 3 in the flat payload.
        let offset = 20 + 4 * 3;
        bytes[offset..offset + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        expect_offset(decode_feature_bytes(&bytes).unwrap_err(), offset as u64);
    }

    #[test]
    fn label_out_of_range_names_label_offset() {
        let mut bytes = encode_feature_bytes(&pool(true));
        let offset = 20 + 4 * 6 + 4; // second label
        bytes[offset..offset + 4].copy_from_slice(&7u32.to_le_bytes());
        let err = decode_feature_bytes(&bytes).unwrap_err();
        match err {
            Error::FileFormat {
                offset: o,
                kind: FormatErrorKind::LabelOutOfRange { label: 7, classes: 3 },
            } => assert_eq!(o, offset as u64),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode_feature_bytes(&pool(false));
        let end = bytes.len();
        bytes.push(0);
        expect_offset(decode_feature_bytes(&bytes).unwrap_err(), end as u64);
    }

    #[test]
    fn empty_pool_is_rejected() {
        let mut bytes = encode_feature_bytes(&pool(false));
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        expect_offset(decode_feature_bytes(&bytes).unwrap_err(), 8);
    }

    #[test]
    fn csv_header_and_field_errors() {
        assert!(matches!(
            decode_feature_csv("bogus\n1,2\n").unwrap_err(),
            Error::FileFormat { offset: 0, .. }
        ));

        // Bad float on row 0, second field: offset = header length + "1,".
        let text = "n=1,d=2,labeled=0,classes=0\n1,zzz\n";
        let err = decode_feature_csv(text).unwrap_err();
        expect_offset(err, 30);

        // Row with too few fields reports the line offset.
        let text = "n=1,d=2,labeled=0,classes=0\n1\n";
        expect_offset(decode_feature_csv(text).unwrap_err(), 28);

        // Declared two rows, provided one.
        let text = "n=2,d=1,labeled=0,classes=0\n1\n";
        expect_offset(decode_feature_csv(text).unwrap_err(), text.len() as u64);

        // Label out of range.
        let text = "n=1,d=1,labeled=1,classes=2\n0.5,4\n";
        let err = decode_feature_csv(text).unwrap_err();
        match err {
            Error::FileFormat {
                kind: FormatErrorKind::LabelOutOfRange { label: 4, classes: 2 },
                ..
            } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_hand_written_fixture_parses() {
        let text = "n=2,d=2,labeled=1,classes=3\n0.5,-1,2\n1.5,0.25,0\n";
        let p = decode_feature_csv(text).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.dim(), 2);
        assert_eq!(p.labels().unwrap(), &[2, 0]);
        assert_eq!(p.features().data()[[0, 1]], -1.0);
    }

    fn finite_f32() -> impl Strategy<Value = f32> {
        prop_oneof![
            proptest::num::f32::NORMAL,
            proptest::num::f32::SUBNORMAL,
            proptest::num::f32::ZERO,
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_round_trip_binary_and_csv(
            rows in 1usize..8,
            cols in 1usize..6,
            labeled in proptest::bool::ANY,
            values in proptest::collection::vec(finite_f32(), 48),
            labels in proptest::collection::vec(0u32..5, 8),
        ) {
            let flat: Vec<f32> = values[..rows * cols].to_vec();
            let features =
                FeatureMatrix::new(Array2::from_shape_vec((rows, cols), flat).unwrap()).unwrap();
            let pool = if labeled {
                FeaturePool::labeled(features, labels[..rows].to_vec(), 5).unwrap()
            } else {
                FeaturePool::unlabeled(features)
            };

            let bin = decode_feature_bytes(&encode_feature_bytes(&pool)).unwrap();
            prop_assert_eq!(&bin, &pool);

            let csv = decode_feature_csv(&encode_feature_csv(&pool)).unwrap();
            prop_assert_eq!(&csv, &pool);
        }
    }
}
