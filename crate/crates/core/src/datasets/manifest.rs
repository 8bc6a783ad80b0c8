//! Manifest CSV:
//!
//! ```text
//! sample_id,image_path,label,pitch,yaw,roll,occlusions,landmarks
//! ```
//!
//! Angles are degrees and are either all present or all empty. `occlusions`
//! is a `|`-joined subset of `upper`, `bottom`, `left_right`, `glasses_mask`
//! (the finer labels `glasses`, `mask`, `left` and `right` are folded into
//! the last two). `landmarks` is a `|`-joined list of `name:x:y`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::{Landmark, LandmarkName};

pub const MANIFEST_HEADER: [&str; 8] = [
    "sample_id",
    "image_path",
    "label",
    "pitch",
    "yaw",
    "roll",
    "occlusions",
    "landmarks",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occlusion {
    Upper,
    Bottom,
    LeftRight,
    GlassesMask,
}

impl Occlusion {
    pub const ALL: [Occlusion; 4] = [
        Occlusion::Upper,
        Occlusion::Bottom,
        Occlusion::LeftRight,
        Occlusion::GlassesMask,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Occlusion::Upper => "upper",
            Occlusion::Bottom => "bottom",
            Occlusion::LeftRight => "left_right",
            Occlusion::GlassesMask => "glasses_mask",
        }
    }
}

impl fmt::Display for Occlusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Occlusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "upper" => Occlusion::Upper,
            "bottom" => Occlusion::Bottom,
            "left_right" | "left" | "right" => Occlusion::LeftRight,
            "glasses_mask" | "glasses" | "mask" => Occlusion::GlassesMask,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown occlusion token `{s}`"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub image_path: String,
    pub label: usize,
    pub pose: Option<Pose>,
    pub occlusions: BTreeSet<Occlusion>,
    pub landmarks: Option<Vec<Landmark>>,
}

impl ManifestRecord {
    pub fn new(sample_id: impl Into<String>, image_path: impl Into<String>, label: usize) -> Self {
        ManifestRecord {
            sample_id: sample_id.into(),
            image_path: image_path.into(),
            label,
            pose: None,
            occlusions: BTreeSet::new(),
            landmarks: None,
        }
    }

    fn to_row(&self) -> [String; 8] {
        let angle = |f: fn(&Pose) -> f64| {
            self.pose
                .as_ref()
                .map(|p| f(p).to_string())
                .unwrap_or_default()
        };
        let occ: Vec<&str> = self.occlusions.iter().map(|o| o.as_str()).collect();
        let lms = self
            .landmarks
            .as_ref()
            .map(|l| {
                l.iter()
                    .map(|m| format!("{}:{}:{}", m.name.as_str(), m.x, m.y))
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .unwrap_or_default();
        [
            self.sample_id.clone(),
            self.image_path.clone(),
            self.label.to_string(),
            angle(|p| p.pitch),
            angle(|p| p.yaw),
            angle(|p| p.roll),
            occ.join("|"),
            lms,
        ]
    }
}

fn parse_record(fields: &csv::StringRecord, line: usize) -> Result<ManifestRecord> {
    if fields.len() != MANIFEST_HEADER.len() {
        return Err(Error::parse(
            line,
            format!(
                "expected {} fields, got {}",
                MANIFEST_HEADER.len(),
                fields.len()
            ),
        ));
    }
    let get = |i: usize| fields.get(i).unwrap_or("").trim();
    let sample_id = get(0);
    if sample_id.is_empty() {
        return Err(Error::parse(line, "empty sample_id"));
    }
    let label = get(2)
        .parse::<usize>()
        .map_err(|_| Error::parse(line, format!("bad label `{}`", get(2))))?;

    let angles: Vec<&str> = (3..6).map(get).collect();
    let pose = if angles.iter().all(|a| a.is_empty()) {
        None
    } else if angles.iter().any(|a| a.is_empty()) {
        return Err(Error::parse(
            line,
            "pitch, yaw and roll must be all present or all absent",
        ));
    } else {
        let mut v = [0.0; 3];
        for (slot, (name, a)) in v
            .iter_mut()
            .zip(["pitch", "yaw", "roll"].iter().zip(&angles))
        {
            *slot = a
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line, format!("malformed {name} `{a}`")))?;
        }
        Some(Pose {
            pitch: v[0],
            yaw: v[1],
            roll: v[2],
        })
    };

    let mut occlusions = BTreeSet::new();
    for tok in get(6)
        .split('|')
        .map(str::trim)
        .filter(|t| !t.is_empty() && *t != "none")
    {
        occlusions.insert(
            tok.parse::<Occlusion>()
                .map_err(|e| Error::parse(line, e.to_string()))?,
        );
    }

    let landmarks = if get(7).is_empty() {
        None
    } else {
        let mut out = Vec::new();
        for tok in get(7).split('|') {
            let parts: Vec<&str> = tok.trim().split(':').collect();
            let bad = || Error::parse(line, format!("bad landmark `{tok}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let name = parts[0].parse::<LandmarkName>().map_err(|_| bad())?;
            let x = parts[1].parse::<f64>().map_err(|_| bad())?;
            let y = parts[2].parse::<f64>().map_err(|_| bad())?;
            out.push(Landmark { name, x, y });
        }
        if out.len() > 5 {
            return Err(Error::parse(line, "more than 5 landmarks"));
        }
        Some(out)
    };

    Ok(ManifestRecord {
        sample_id: sample_id.to_string(),
        image_path: get(1).to_string(),
        label,
        pose,
        occlusions,
        landmarks,
    })
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != MANIFEST_HEADER {
        return Err(Error::parse(1, format!("unexpected header {names:?}")));
    }
    let mut records = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let rec = parse_record(&row, line)?;
        if !ids.insert(rec.sample_id.clone()) {
            return Err(Error::parse(
                line,
                format!("duplicate sample_id `{}`", rec.sample_id),
            ));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn manifest_to_string(records: &[ManifestRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    std::fs::write(path, manifest_to_string(records)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "sample_id,image_path,label,pitch,yaw,roll,occlusions,landmarks\n";

    #[test]
    fn empty_manifest() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest(HEADER).unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let mut a = ManifestRecord::new("a", "img/a.pgm", 2);
        a.pose = Some(Pose {
            pitch: -31.5,
            yaw: 0.0,
            roll: 12.25,
        });
        a.occlusions.insert(Occlusion::Upper);
        a.occlusions.insert(Occlusion::GlassesMask);
        a.landmarks = Some(vec![Landmark {
            name: LandmarkName::Nose,
            x: 31.5,
            y: 40.0,
        }]);
        let b = ManifestRecord::new("b", "img/b,with comma.pgm", 0);
        let text = manifest_to_string(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(parse_manifest(&text).unwrap(), vec![a, b]);
    }

    #[test]
    fn malformed_angle_reports_line() {
        let text = format!("{HEADER}a,x.pgm,0,1,2,3,,\nb,y.pgm,1,12,abc,0,,\n");
        match parse_manifest(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("yaw"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_angles_rejected() {
        let text = format!("{HEADER}a,x.pgm,0,1,,3,,\n");
        assert!(matches!(
            parse_manifest(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_occlusion_rejected() {
        let text = format!("{HEADER}a,x.pgm,0,,,,upper|hat,\n");
        assert!(matches!(
            parse_manifest(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn finer_occlusion_labels_fold() {
        let text = format!("{HEADER}a,x.pgm,0,,,,glasses|mask|left,\n");
        let r = &parse_manifest(&text).unwrap()[0];
        assert_eq!(
            r.occlusions.iter().copied().collect::<Vec<_>>(),
            vec![Occlusion::LeftRight, Occlusion::GlassesMask]
        );
    }

    #[test]
    fn header_and_duplicates() {
        assert!(parse_manifest("id,path\n").is_err());
        let text = format!("{HEADER}a,x.pgm,0,,,,,\na,y.pgm,0,,,,,\n");
        assert!(matches!(
            parse_manifest(&text),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
