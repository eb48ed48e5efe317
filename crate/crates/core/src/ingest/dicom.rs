//! Reader (and fixture writer) for single-frame, uncompressed, explicit-VR
//! little-endian CT slices.

use super::{IngestError, SliceImage};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";
pub const IMPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2";
pub const EXPLICIT_VR_BIG_ENDIAN: &str = "1.2.840.10008.1.2.2";
pub const JPEG_BASELINE: &str = "1.2.840.10008.1.2.4.50";
pub const CT_IMAGE_STORAGE: &str = "1.2.840.10008.5.1.4.1.1.2";

const PREAMBLE_LEN: usize = 128;
const MAGIC: &[u8; 4] = b"DICM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(pub u16, pub u16);

impl Tag {
    pub const TRANSFER_SYNTAX: Tag = Tag(0x0002, 0x0010);
    pub const IMAGE_POSITION_PATIENT: Tag = Tag(0x0020, 0x0032);
    pub const SLICE_LOCATION: Tag = Tag(0x0020, 0x1041);
    pub const ROWS: Tag = Tag(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag(0x0028, 0x0011);
    pub const PIXEL_SPACING: Tag = Tag(0x0028, 0x0030);
    pub const BITS_ALLOCATED: Tag = Tag(0x0028, 0x0100);
    pub const PIXEL_REPRESENTATION: Tag = Tag(0x0028, 0x0103);
    pub const RESCALE_INTERCEPT: Tag = Tag(0x0028, 0x1052);
    pub const RESCALE_SLOPE: Tag = Tag(0x0028, 0x1053);
    pub const NUMBER_OF_FRAMES: Tag = Tag(0x0028, 0x0008);
    pub const PIXEL_DATA: Tag = Tag(0x7FE0, 0x0010);

    const ITEM: Tag = Tag(0xFFFE, 0xE000);
    const ITEM_DELIMITER: Tag = Tag(0xFFFE, 0xE00D);
    const SEQUENCE_DELIMITER: Tag = Tag(0xFFFE, 0xE0DD);

    pub fn name(self) -> &'static str {
        match self {
            Tag::TRANSFER_SYNTAX => "TransferSyntaxUID(0002,0010)",
            Tag::IMAGE_POSITION_PATIENT => "ImagePositionPatient(0020,0032)",
            Tag::SLICE_LOCATION => "SliceLocation(0020,1041)",
            Tag::ROWS => "Rows(0028,0010)",
            Tag::COLUMNS => "Columns(0028,0011)",
            Tag::PIXEL_SPACING => "PixelSpacing(0028,0030)",
            Tag::BITS_ALLOCATED => "BitsAllocated(0028,0100)",
            Tag::PIXEL_REPRESENTATION => "PixelRepresentation(0028,0103)",
            Tag::RESCALE_INTERCEPT => "RescaleIntercept(0028,1052)",
            Tag::RESCALE_SLOPE => "RescaleSlope(0028,1053)",
            Tag::NUMBER_OF_FRAMES => "NumberOfFrames(0028,0008)",
            Tag::PIXEL_DATA => "PixelData(7FE0,0010)",
            _ => "unknown",
        }
    }
}

/// VRs that use the 2 reserved bytes + 32-bit length header form.
fn has_long_length(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR" | b"UT" | b"UV"
    )
}

const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(IngestError::Truncated { offset: self.pos })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, IngestError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tag(&mut self) -> Result<Tag, IngestError> {
        Ok(Tag(self.u16()?, self.u16()?))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}

struct Element<'a> {
    tag: Tag,
    vr: [u8; 2],
    value: &'a [u8],
}

/// Reads one explicit-VR element. Sequences are skipped and returned with an
/// empty value.
fn read_element<'a>(cur: &mut Cursor<'a>) -> Result<Element<'a>, IngestError> {
    let tag = cur.tag()?;
    let vr_bytes = cur.take(2)?;
    let vr = [vr_bytes[0], vr_bytes[1]];
    let len = if has_long_length(vr) {
        cur.take(2)?;
        cur.u32()?
    } else {
        u32::from(cur.u16()?)
    };
    if &vr == b"SQ" {
        skip_sequence(cur, len)?;
        return Ok(Element { tag, vr, value: &[] });
    }
    if len == UNDEFINED_LENGTH {
        // Encapsulated pixel data only occurs with compressed syntaxes.
        return Err(IngestError::UnsupportedTransferSyntax {
            uid: "encapsulated pixel data".into(),
        });
    }
    let value = cur.take(len as usize)?;
    Ok(Element { tag, vr, value })
}

fn skip_sequence(cur: &mut Cursor<'_>, len: u32) -> Result<(), IngestError> {
    if len != UNDEFINED_LENGTH {
        cur.take(len as usize)?;
        return Ok(());
    }
    loop {
        let tag = cur.tag()?;
        let item_len = cur.u32()?;
        match tag {
            Tag::SEQUENCE_DELIMITER => return Ok(()),
            Tag::ITEM if item_len == UNDEFINED_LENGTH => loop {
                let start = cur.pos;
                if cur.tag()? == Tag::ITEM_DELIMITER {
                    cur.u32()?;
                    break;
                }
                cur.pos = start;
                read_element(cur)?;
            },
            Tag::ITEM => {
                cur.take(item_len as usize)?;
            }
            _ => return Err(IngestError::Truncated { offset: cur.pos }),
        }
    }
}

fn text(value: &[u8]) -> String {
    String::from_utf8_lossy(value)
        .trim_matches(|c: char| c == '\0' || c.is_whitespace())
        .to_string()
}

fn decimals(tag: Tag, value: &[u8]) -> Result<Vec<f64>, IngestError> {
    text(value)
        .split('\\')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| IngestError::MalformedValue { tag: tag.name() })
        })
        .collect()
}

fn us(tag: Tag, value: &[u8]) -> Result<u16, IngestError> {
    match value {
        [a, b, ..] => Ok(u16::from_le_bytes([*a, *b])),
        _ => Err(IngestError::MalformedValue { tag: tag.name() }),
    }
}

#[derive(Default)]
struct Header<'a> {
    transfer_syntax: Option<String>,
    rows: Option<u16>,
    cols: Option<u16>,
    spacing: Option<Vec<f64>>,
    position: Option<Vec<f64>>,
    slice_location: Option<f64>,
    bits_allocated: Option<u16>,
    pixel_representation: u16,
    frames: Option<String>,
    slope: Option<f64>,
    intercept: Option<f64>,
    pixel_data: Option<&'a [u8]>,
}

/// Parses a single CT slice.
pub fn parse_dicom_slice(bytes: &[u8]) -> Result<SliceImage, IngestError> {
    if bytes.len() < PREAMBLE_LEN + 4 || &bytes[PREAMBLE_LEN..PREAMBLE_LEN + 4] != MAGIC {
        return Err(IngestError::MissingMagic);
    }
    let mut cur = Cursor {
        bytes,
        pos: PREAMBLE_LEN + 4,
    };
    let mut h = Header::default();

    while !cur.at_end() {
        let el = read_element(&mut cur)?;
        match el.tag {
            Tag::TRANSFER_SYNTAX => {
                let uid = text(el.value);
                if uid != EXPLICIT_VR_LITTLE_ENDIAN {
                    return Err(IngestError::UnsupportedTransferSyntax { uid });
                }
                h.transfer_syntax = Some(uid);
            }
            Tag(0x0002, _) => {}
            tag if h.transfer_syntax.is_none() => {
                // Dataset begins without a declared syntax.
                let _ = tag;
                return Err(IngestError::MissingRequiredTag {
                    tag: Tag::TRANSFER_SYNTAX.name(),
                });
            }
            Tag::ROWS => h.rows = Some(us(el.tag, el.value)?),
            Tag::COLUMNS => h.cols = Some(us(el.tag, el.value)?),
            Tag::PIXEL_SPACING => h.spacing = Some(decimals(el.tag, el.value)?),
            Tag::IMAGE_POSITION_PATIENT => h.position = Some(decimals(el.tag, el.value)?),
            Tag::SLICE_LOCATION => {
                h.slice_location = decimals(el.tag, el.value)?.first().copied();
            }
            Tag::BITS_ALLOCATED => h.bits_allocated = Some(us(el.tag, el.value)?),
            Tag::PIXEL_REPRESENTATION => h.pixel_representation = us(el.tag, el.value)?,
            Tag::NUMBER_OF_FRAMES => h.frames = Some(text(el.value)),
            Tag::RESCALE_SLOPE => h.slope = decimals(el.tag, el.value)?.first().copied(),
            Tag::RESCALE_INTERCEPT => h.intercept = decimals(el.tag, el.value)?.first().copied(),
            Tag::PIXEL_DATA => {
                if &el.vr != b"OW" && &el.vr != b"OB" {
                    return Err(IngestError::MalformedValue { tag: el.tag.name() });
                }
                h.pixel_data = Some(el.value);
            }
            _ => {}
        }
    }

    let missing = |tag: Tag| IngestError::MissingRequiredTag { tag: tag.name() };
    if h.transfer_syntax.is_none() {
        return Err(missing(Tag::TRANSFER_SYNTAX));
    }
    let rows = h.rows.ok_or(missing(Tag::ROWS))?;
    let cols = h.cols.ok_or(missing(Tag::COLUMNS))?;
    let bits = h.bits_allocated.ok_or(missing(Tag::BITS_ALLOCATED))?;
    if bits != 16 {
        return Err(IngestError::UnsupportedPixelFormat { bits_allocated: bits });
    }
    if let Some(frames) = h.frames.as_deref() {
        if frames.parse::<u32>().map(|n| n > 1).unwrap_or(true) {
            return Err(IngestError::UnsupportedMultiFrame);
        }
    }
    let spacing = h.spacing.ok_or(missing(Tag::PIXEL_SPACING))?;
    if spacing.len() != 2 || spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(IngestError::MalformedValue {
            tag: Tag::PIXEL_SPACING.name(),
        });
    }
    let slice_position = match (&h.position, h.slice_location) {
        (Some(p), _) if p.len() == 3 => p[2],
        (Some(_), _) => {
            return Err(IngestError::MalformedValue {
                tag: Tag::IMAGE_POSITION_PATIENT.name(),
            })
        }
        (None, Some(loc)) => loc,
        (None, None) => return Err(missing(Tag::IMAGE_POSITION_PATIENT)),
    };
    let pixels = h.pixel_data.ok_or(missing(Tag::PIXEL_DATA))?;
    let expected = usize::from(rows) * usize::from(cols) * 2;
    // Odd-length payloads are padded to even length; a 1-byte pad is tolerated.
    if pixels.len() != expected && pixels.len() != expected + 1 {
        return Err(IngestError::PixelDataLengthMismatch {
            expected,
            actual: pixels.len(),
        });
    }
    let signed = h.pixel_representation == 1;
    let samples = pixels[..expected]
        .chunks_exact(2)
        .map(|c| {
            let raw = u16::from_le_bytes([c[0], c[1]]);
            if signed {
                i32::from(raw as i16)
            } else {
                i32::from(raw)
            }
        })
        .collect();

    SliceImage::new(
        usize::from(rows),
        usize::from(cols),
        // PixelSpacing is (row spacing, column spacing).
        (spacing[0], spacing[1]),
        slice_position,
        h.slope.unwrap_or(1.0),
        h.intercept.unwrap_or(0.0),
        samples,
    )
}

/// Description of a slice for [`write_dicom_slice`].
#[derive(Debug, Clone)]
pub struct SliceFixture {
    pub rows: u16,
    pub cols: u16,
    /// (row spacing, column spacing) in mm.
    pub pixel_spacing: (f64, f64),
    pub slice_position: f64,
    pub rescale_slope: Option<f64>,
    pub rescale_intercept: Option<f64>,
    pub samples: Vec<i16>,
    pub signed: bool,
    pub transfer_syntax: String,
    /// Write SliceLocation instead of ImagePositionPatient.
    pub use_slice_location: bool,
    /// Inserts a nested, undefined-length sequence ahead of the image tags.
    pub with_sequence: bool,
}

impl SliceFixture {
    pub fn new(rows: u16, cols: u16, slice_position: f64, samples: Vec<i16>) -> Self {
        Self {
            rows,
            cols,
            pixel_spacing: (1.0, 1.0),
            slice_position,
            rescale_slope: None,
            rescale_intercept: None,
            samples,
            signed: true,
            transfer_syntax: EXPLICIT_VR_LITTLE_ENDIAN.to_string(),
            use_slice_location: false,
            with_sequence: false,
        }
    }
}

fn push_element(out: &mut Vec<u8>, tag: Tag, vr: &[u8; 2], value: &[u8]) {
    out.extend_from_slice(&tag.0.to_le_bytes());
    out.extend_from_slice(&tag.1.to_le_bytes());
    out.extend_from_slice(vr);
    if has_long_length(*vr) {
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(value.len() as u32).to_le_bytes());
    } else {
        out.extend_from_slice(&(value.len() as u16).to_le_bytes());
    }
    out.extend_from_slice(value);
}

/// Pads a text value to even length as required for DICOM string VRs.
fn padded(s: &str, pad: u8) -> Vec<u8> {
    let mut v = s.as_bytes().to_vec();
    if v.len() % 2 == 1 {
        v.push(pad);
    }
    v
}

fn ds(values: &[f64]) -> Vec<u8> {
    let joined = values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("\\");
    padded(&joined, b' ')
}

/// Serializes a slice in the subset [`parse_dicom_slice`] accepts (and a few
/// variants it rejects, controlled by the fixture's transfer syntax).
pub fn write_dicom_slice(f: &SliceFixture) -> Vec<u8> {
    let mut out = vec![0u8; PREAMBLE_LEN];
    out.extend_from_slice(MAGIC);

    let mut meta = Vec::new();
    push_element(&mut meta, Tag(0x0002, 0x0001), b"OB", &[0, 1]);
    push_element(&mut meta, Tag(0x0002, 0x0002), b"UI", &padded(CT_IMAGE_STORAGE, 0));
    push_element(&mut meta, Tag::TRANSFER_SYNTAX, b"UI", &padded(&f.transfer_syntax, 0));
    let mut group_len = Vec::new();
    push_element(
        &mut group_len,
        Tag(0x0002, 0x0000),
        b"UL",
        &(meta.len() as u32).to_le_bytes(),
    );
    out.extend_from_slice(&group_len);
    out.extend_from_slice(&meta);

    push_element(&mut out, Tag(0x0008, 0x0060), b"CS", &padded("CT", b' '));
    if f.with_sequence {
        // (0008,1140) ReferencedImageSequence, undefined length, one item.
        out.extend_from_slice(&0x0008u16.to_le_bytes());
        out.extend_from_slice(&0x1140u16.to_le_bytes());
        out.extend_from_slice(b"SQ\0\0");
        out.extend_from_slice(&UNDEFINED_LENGTH.to_le_bytes());
        out.extend_from_slice(&0xFFFEu16.to_le_bytes());
        out.extend_from_slice(&0xE000u16.to_le_bytes());
        out.extend_from_slice(&UNDEFINED_LENGTH.to_le_bytes());
        push_element(&mut out, Tag(0x0008, 0x1150), b"UI", &padded(CT_IMAGE_STORAGE, 0));
        out.extend_from_slice(&0xFFFEu16.to_le_bytes());
        out.extend_from_slice(&0xE00Du16.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&0xFFFEu16.to_le_bytes());
        out.extend_from_slice(&0xE0DDu16.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
    }
    if f.use_slice_location {
        push_element(&mut out, Tag::SLICE_LOCATION, b"DS", &ds(&[f.slice_position]));
    } else {
        push_element(
            &mut out,
            Tag::IMAGE_POSITION_PATIENT,
            b"DS",
            &ds(&[0.0, 0.0, f.slice_position]),
        );
    }
    push_element(&mut out, Tag(0x0028, 0x0002), b"US", &1u16.to_le_bytes());
    push_element(&mut out, Tag::ROWS, b"US", &f.rows.to_le_bytes());
    push_element(&mut out, Tag::COLUMNS, b"US", &f.cols.to_le_bytes());
    push_element(
        &mut out,
        Tag::PIXEL_SPACING,
        b"DS",
        &ds(&[f.pixel_spacing.0, f.pixel_spacing.1]),
    );
    push_element(&mut out, Tag::BITS_ALLOCATED, b"US", &16u16.to_le_bytes());
    push_element(&mut out, Tag(0x0028, 0x0101), b"US", &16u16.to_le_bytes());
    push_element(&mut out, Tag(0x0028, 0x0102), b"US", &15u16.to_le_bytes());
    push_element(
        &mut out,
        Tag::PIXEL_REPRESENTATION,
        b"US",
        &u16::from(f.signed).to_le_bytes(),
    );
    if let Some(b) = f.rescale_intercept {
        push_element(&mut out, Tag::RESCALE_INTERCEPT, b"DS", &ds(&[b]));
    }
    if let Some(m) = f.rescale_slope {
        push_element(&mut out, Tag::RESCALE_SLOPE, b"DS", &ds(&[m]));
    }
    let pixels: Vec<u8> = f.samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    push_element(&mut out, Tag::PIXEL_DATA, b"OW", &pixels);
    out
}
