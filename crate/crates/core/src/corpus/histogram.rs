use std::collections::BTreeMap;
use std::io::Write;

use super::{CorpusError, FeatureCategory, FeatureId, FrameRecord};

/// Number of frames carrying each feature.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountHistogram {
    pub entries: BTreeMap<FeatureId, u64>,
    /// Frames scanned, including frames that contributed nothing.
    pub frames: u64,
}

impl CountHistogram {
    pub fn total_instances(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn mean_per_frame(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.total_instances() as f64 / self.frames as f64
        }
    }

    pub fn get(&self, feature: &FeatureId) -> u64 {
        self.entries.get(feature).copied().unwrap_or(0)
    }
}

pub fn feature_counts(frames: &[FrameRecord], category: Option<FeatureCategory>) -> CountHistogram {
    let mut entries = BTreeMap::new();
    for frame in frames {
        for f in &frame.features {
            if category.is_none_or(|c| f.category() == c) {
                *entries.entry(f.clone()).or_insert(0) += 1;
            }
        }
    }
    CountHistogram {
        entries,
        frames: frames.len() as u64,
    }
}

/// `category,type,value,frames` rows, one per feature, in feature order.
pub fn write_histograms_csv<W: Write>(histograms: &[&CountHistogram], out: W) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["category", "type", "value", "frames"])?;
    for h in histograms {
        for (f, n) in &h.entries {
            writer.write_record([f.category().as_str(), f.kind(), f.value(), &n.to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_to_frames, AnnotationSpan};
    use proptest::prelude::*;

    fn with(features: &[FeatureId]) -> FrameRecord {
        let mut f = FrameRecord::new("v", 0);
        f.features.extend(features.iter().cloned());
        f
    }

    #[test]
    fn two_frames_same_feature() {
        let f = FeatureId::facial("nose", "wrinkle");
        let h = feature_counts(&[with(std::slice::from_ref(&f)), with(std::slice::from_ref(&f))], None);
        assert_eq!(h.entries.len(), 1);
        assert_eq!(h.get(&f), 2);
    }

    #[test]
    fn mean_features_per_frame() {
        let spans = [
            AnnotationSpan {
                video_id: "v".into(),
                tier: "nose".into(),
                value: "a".into(),
                start_frame: 1,
                end_frame: 2,
            },
            AnnotationSpan {
                video_id: "v".into(),
                tier: "mouth".into(),
                value: "b".into(),
                start_frame: 2,
                end_frame: 3,
            },
        ];
        let h = feature_counts(&expand_to_frames(&spans), None);
        assert_eq!(h.total_instances(), 4);
        assert_eq!(h.frames, 3);
        assert_eq!(h.mean_per_frame(), 4.0 / 3.0);
    }

    #[test]
    fn category_filter() {
        let frames = [with(&[
            FeatureId::facial("nose", "w"),
            FeatureId::linguistic("pos", "noun"),
        ])];
        let h = feature_counts(&frames, Some(FeatureCategory::Linguistic));
        assert_eq!(h.entries.len(), 1);
        assert_eq!(h.frames, 1);
        assert_eq!(feature_counts(&[], None).mean_per_frame(), 0.0);
    }

    #[test]
    fn csv_schema() {
        let h = feature_counts(&[with(&[FeatureId::facial("eye brows", "lowered")])], None);
        let mut buf = Vec::new();
        write_histograms_csv(&[&h], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "category,type,value,frames\nfacial,eye brows,lowered,1\n"
        );
    }

    proptest! {
        #[test]
        fn matches_brute_force_recount(
            rows in prop::collection::vec(prop::collection::btree_set(0usize..12, 0..6), 0..200)
        ) {
            let vocab: Vec<FeatureId> = (0..12).map(|i| FeatureId::facial(&format!("t{}", i % 4), &format!("v{i}"))).collect();
            let frames: Vec<FrameRecord> = rows
                .iter()
                .map(|ids| with(&ids.iter().map(|&i| vocab[i].clone()).collect::<Vec<_>>()))
                .collect();
            let h = feature_counts(&frames, None);
            for (i, f) in vocab.iter().enumerate() {
                let brute = rows.iter().filter(|ids| ids.contains(&i)).count() as u64;
                prop_assert_eq!(h.get(f), brute);
            }
            let total: usize = rows.iter().map(|r| r.len()).sum();
            prop_assert_eq!(h.total_instances(), total as u64);
        }
    }
}
