use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::manifest::{ManifestRecord, Occlusion};
use crate::error::{Error, Result};

/// Records whose |pitch| or |yaw| exceeds `threshold_degrees`. Roll is
/// in-plane and ignored. Every record must carry angles.
pub fn build_pose_subset(
    records: &[ManifestRecord],
    threshold_degrees: f64,
) -> Result<Vec<ManifestRecord>> {
    let missing: Vec<String> = records
        .iter()
        .filter(|r| r.pose.is_none())
        .map(|r| r.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAngles(missing));
    }
    Ok(records
        .iter()
        .filter(|r| r.pose.is_some_and(|p| exceeds(&p, threshold_degrees)))
        .cloned()
        .collect())
}

fn exceeds(p: &super::Pose, t: f64) -> bool {
    p.pitch.abs() > t || p.yaw.abs() > t
}

/// Records with at least one occlusion type.
pub fn build_occlusion_subset(records: &[ManifestRecord]) -> Vec<ManifestRecord> {
    records
        .iter()
        .filter(|r| !r.occlusions.is_empty())
        .cloned()
        .collect()
}

/// Table-1 style counts over a source set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub source_size: usize,
    pub upper: usize,
    pub bottom: usize,
    pub left_right: usize,
    pub glasses_mask: usize,
    /// Records with any occlusion; each multi-type record counts once here.
    pub occluded: usize,
    /// Records with pose angles; the pose counts only consider these.
    pub with_pose: usize,
    pub pose_over_30: usize,
    pub pose_over_45: usize,
    pub occluded_fraction: f64,
    pub pose_over_30_fraction: f64,
    pub pose_over_45_fraction: f64,
}

impl SubsetStats {
    pub fn occlusion_count(&self, o: Occlusion) -> usize {
        match o {
            Occlusion::Upper => self.upper,
            Occlusion::Bottom => self.bottom,
            Occlusion::LeftRight => self.left_right,
            Occlusion::GlassesMask => self.glasses_mask,
        }
    }

    /// Aligned text table: four occlusion columns then the two pose columns.
    pub fn to_table(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>12} {:>14} {:>8} {:>8}",
            "", "upper", "bottom", "left/right", "glasses/mask", ">30", ">45"
        );
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>12} {:>14} {:>8} {:>8}",
            name,
            self.upper,
            self.bottom,
            self.left_right,
            self.glasses_mask,
            self.pose_over_30,
            self.pose_over_45
        );
        let _ = writeln!(
            out,
            "occluded {} of {} ({:.2}%), pose>30 {:.2}%, pose>45 {:.2}%",
            self.occluded,
            self.source_size,
            100.0 * self.occluded_fraction,
            100.0 * self.pose_over_30_fraction,
            100.0 * self.pose_over_45_fraction
        );
        out
    }
}

pub fn subset_stats(records: &[ManifestRecord]) -> SubsetStats {
    let count = |o: Occlusion| records.iter().filter(|r| r.occlusions.contains(&o)).count();
    let posed: Vec<_> = records.iter().filter_map(|r| r.pose).collect();
    let over = |t: f64| posed.iter().filter(|p| exceeds(p, t)).count();
    let n = records.len();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let occluded = records.iter().filter(|r| !r.occlusions.is_empty()).count();
    let (p30, p45) = (over(30.0), over(45.0));
    SubsetStats {
        source_size: n,
        upper: count(Occlusion::Upper),
        bottom: count(Occlusion::Bottom),
        left_right: count(Occlusion::LeftRight),
        glasses_mask: count(Occlusion::GlassesMask),
        occluded,
        with_pose: posed.len(),
        pose_over_30: p30,
        pose_over_45: p45,
        occluded_fraction: frac(occluded),
        pose_over_30_fraction: frac(p30),
        pose_over_45_fraction: frac(p45),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Pose;

    fn rec(id: &str, pitch: f64, yaw: f64, occ: &[Occlusion]) -> ManifestRecord {
        let mut r = ManifestRecord::new(id, format!("{id}.pgm"), 0);
        r.pose = Some(Pose {
            pitch,
            yaw,
            roll: 80.0,
        });
        r.occlusions = occ.iter().copied().collect();
        r
    }

    /// 20 hand-written records; expected memberships are listed per record.
    fn toy() -> Vec<ManifestRecord> {
        use Occlusion::*;
        vec![
            rec("r00", 10.0, 35.0, &[]),         // >30
            rec("r01", -31.0, 0.0, &[Upper]),    // >30
            rec("r02", 30.0, 30.0, &[]),         // boundary, not >30
            rec("r03", 0.0, -46.0, &[Bottom]),   // >30 >45
            rec("r04", 45.0, 0.0, &[LeftRight]), // >30, not >45
            rec("r05", 5.0, 5.0, &[]),
            rec("r06", -60.0, 50.0, &[GlassesMask, Upper]), // >30 >45
            rec("r07", 29.9, -29.9, &[]),
            rec("r08", 0.0, 0.0, &[Bottom, LeftRight]),
            rec("r09", 12.0, -88.0, &[]), // >30 >45
            rec("r10", 1.0, 2.0, &[]),
            rec("r11", -45.5, 1.0, &[GlassesMask]), // >30 >45
            rec("r12", 3.0, 30.5, &[]),             // >30
            rec("r13", 0.0, 0.0, &[Upper]),
            rec("r14", 20.0, 20.0, &[]),
            rec("r15", -30.0, -30.0, &[]),
            rec("r16", 0.0, 0.0, &[]),
            rec("r17", 44.0, 44.0, &[Bottom]), // >30
            rec("r18", 90.0, 0.0, &[]),        // >30 >45
            rec("r19", 0.0, 0.0, &[GlassesMask]),
        ]
    }

    fn ids(rs: &[ManifestRecord]) -> Vec<&str> {
        rs.iter().map(|r| r.sample_id.as_str()).collect()
    }

    #[test]
    fn pose_rule_examples() {
        let kept = build_pose_subset(
            &[rec("a", 10.0, 35.0, &[]), rec("b", -31.0, 0.0, &[])],
            30.0,
        )
        .unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn toy_pose_subsets() {
        let t = toy();
        assert_eq!(
            ids(&build_pose_subset(&t, 30.0).unwrap()),
            ["r00", "r01", "r03", "r04", "r06", "r09", "r11", "r12", "r17", "r18"]
        );
        assert_eq!(
            ids(&build_pose_subset(&t, 45.0).unwrap()),
            ["r03", "r06", "r09", "r11", "r18"]
        );
    }

    #[test]
    fn toy_occlusion_subset() {
        assert_eq!(
            ids(&build_occlusion_subset(&toy())),
            ["r01", "r03", "r04", "r06", "r08", "r11", "r13", "r17", "r19"]
        );
        let clean = vec![rec("x", 0.0, 0.0, &[])];
        assert!(build_occlusion_subset(&clean).is_empty());
    }

    #[test]
    fn toy_stats_hand_tally() {
        let s = subset_stats(&toy());
        assert_eq!(
            (s.upper, s.bottom, s.left_right, s.glasses_mask),
            (3, 3, 2, 3)
        );
        assert_eq!((s.occluded, s.pose_over_30, s.pose_over_45), (9, 10, 5));
        assert_eq!(s.source_size, 20);
        assert!((s.occluded_fraction - 0.45).abs() < 1e-15);
        assert!(s.to_table("toy").contains("glasses/mask"));
    }

    #[test]
    fn empty_stats() {
        let s = subset_stats(&[]);
        assert_eq!(
            s.source_size + s.upper + s.pose_over_30 + s.pose_over_45 + s.occluded,
            0
        );
        assert_eq!(s.occluded_fraction, 0.0);
    }

    #[test]
    fn missing_angles_listed() {
        let mut t = toy();
        t.push(ManifestRecord::new("nopose", "n.pgm", 1));
        match build_pose_subset(&t, 30.0) {
            Err(Error::MissingAngles(ids)) => assert_eq!(ids, vec!["nopose".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
