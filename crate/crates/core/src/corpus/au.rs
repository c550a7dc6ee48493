use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use super::{canonicalize, CorpusError, FeatureCategory, FeatureId, FrameRecord};

/// The mapping shipped with the toolkit: brows, nose, cheeks, mouth, eye
/// gaze/aperture and the head position/movement codes (AU 51-60, 83).
pub const DEFAULT_AU_TABLE: &str = include_str!("../../data/default_au_map.csv");

const HEADER: [&str; 4] = ["tier", "value", "au_id", "au_label"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AuCode {
    pub au_id: u32,
    pub label: String,
}

impl AuCode {
    pub fn feature(&self) -> FeatureId {
        FeatureId::new(FeatureCategory::Au, &format!("au{}", self.au_id), &self.label)
    }
}

/// Facial `(tier, value)` patterns mapped onto action units.
///
/// A value of `*` matches any value of the tier; an exact `(tier, value)`
/// entry takes precedence over the tier wildcard. Several patterns may share
/// one AU, but each pattern maps to a single AU.
#[derive(Debug, Clone, Default)]
pub struct AuMappingTable {
    codes: Vec<AuCode>,
    exact: HashMap<(String, String), usize>,
    wildcard: HashMap<String, usize>,
}

/// Frame counts of facial features no mapping entry matched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnmappedTally {
    pub frames: BTreeMap<FeatureId, u64>,
}

impl UnmappedTally {
    pub fn total(&self) -> u64 {
        self.frames.values().sum()
    }
}

impl AuMappingTable {
    pub fn default_table() -> Self {
        Self::load(DEFAULT_AU_TABLE.as_bytes()).expect("bundled AU table is valid")
    }

    /// Load a `tier,value,au_id,au_label` CSV table.
    pub fn load<R: Read>(input: R) -> Result<Self, CorpusError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut table = AuMappingTable::default();
        let mut by_id: HashMap<u32, usize> = HashMap::new();

        for (i, row) in reader.records().enumerate() {
            let line = i + 1;
            let row = row.map_err(|e| CorpusError::BadMapping {
                line,
                reason: e.to_string(),
            })?;
            let fields: Vec<&str> = row.iter().map(str::trim).collect();
            if i == 0 {
                if fields != HEADER {
                    return Err(CorpusError::BadMapping {
                        line,
                        reason: format!("expected header `{}`", HEADER.join(",")),
                    });
                }
                continue;
            }
            let bad = |reason: String| CorpusError::BadMapping { line, reason };
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            }
            let tier = canonicalize(fields[0]);
            let value = canonicalize(fields[1]);
            let label = canonicalize(fields[3]);
            if tier.is_empty() || value.is_empty() || label.is_empty() {
                return Err(bad("empty field".into()));
            }
            let au_id: u32 = match fields[2].parse() {
                Ok(id) if id > 0 => id,
                _ => return Err(bad(format!("au_id `{}` is not a positive integer", fields[2]))),
            };

            let code_idx = match by_id.get(&au_id) {
                Some(&idx) if table.codes[idx].label != label => {
                    return Err(bad(format!("AU {au_id} already labelled `{}`", table.codes[idx].label)))
                }
                Some(&idx) => idx,
                None => {
                    table.codes.push(AuCode { au_id, label });
                    by_id.insert(au_id, table.codes.len() - 1);
                    table.codes.len() - 1
                }
            };

            let previous = if value == "*" {
                table.wildcard.insert(tier.clone(), code_idx)
            } else {
                table.exact.insert((tier.clone(), value.clone()), code_idx)
            };
            if let Some(prev) = previous {
                if prev != code_idx {
                    return Err(bad(format!(
                        "`{tier}={value}` already mapped to AU {}",
                        table.codes[prev].au_id
                    )));
                }
            }
        }
        Ok(table)
    }

    pub fn codes(&self) -> &[AuCode] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.wildcard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, feature: &FeatureId) -> Option<&AuCode> {
        if feature.category() != FeatureCategory::Facial {
            return None;
        }
        self.exact
            .get(&(feature.kind().to_string(), feature.value().to_string()))
            .or_else(|| self.wildcard.get(feature.kind()))
            .map(|&i| &self.codes[i])
    }

    /// Add the AU features matched by the frame's facial features. Facial
    /// features without a match stay on the frame and are tallied.
    pub fn map_frame(&self, frame: &FrameRecord, mut unmapped: Option<&mut UnmappedTally>) -> FrameRecord {
        let mut out = frame.clone();
        for feature in &frame.features {
            if feature.category() != FeatureCategory::Facial {
                continue;
            }
            match self.lookup(feature) {
                Some(code) => {
                    out.features.insert(code.feature());
                }
                None => {
                    if let Some(tally) = unmapped.as_deref_mut() {
                        *tally.frames.entry(feature.clone()).or_default() += 1;
                    }
                }
            }
        }
        out
    }

    pub fn map_all(&self, frames: &[FrameRecord]) -> (Vec<FrameRecord>, UnmappedTally) {
        let mut tally = UnmappedTally::default();
        let mapped = frames.iter().map(|f| self.map_frame(f, Some(&mut tally))).collect();
        (mapped, tally)
    }
}

pub fn map_to_aus(frame: &FrameRecord, table: &AuMappingTable) -> FrameRecord {
    table.map_frame(frame, None)
}
