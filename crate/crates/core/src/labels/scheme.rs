use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::LABEL_NODATA;

pub const NALCMS: &str = "nalcms";
pub const CORINE: &str = "corine";
pub const GENERAL: &str = "general";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub code: u8,
    pub name: String,
    pub color: [u8; 3],
}

/// Class registry. Codes and names are unique and never equal the label nodata code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    scheme_id: String,
    entries: Vec<ClassEntry>,
}

impl LabelScheme {
    pub fn new(scheme_id: impl Into<String>, entries: Vec<ClassEntry>) -> Result<Self> {
        let scheme_id = scheme_id.into();
        if entries.is_empty() {
            return Err(Error::Empty(format!("scheme `{scheme_id}` has no entries")));
        }
        let mut codes = HashSet::new();
        let mut names = HashSet::new();
        for e in &entries {
            if e.code == LABEL_NODATA {
                return Err(Error::InvalidArgument(format!(
                    "code {LABEL_NODATA} is reserved for nodata"
                )));
            }
            if !codes.insert(e.code) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate code {} in `{scheme_id}`",
                    e.code
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate name `{}` in `{scheme_id}`",
                    e.name
                )));
            }
        }
        Ok(LabelScheme { scheme_id, entries })
    }

    pub fn id(&self) -> &str {
        &self.scheme_id
    }

    pub fn entries(&self) -> &[ClassEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, code: u8) -> bool {
        self.entries.iter().any(|e| e.code == code)
    }

    pub fn entry(&self, code: u8) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.code == code)
    }

    pub fn code_of(&self, name: &str) -> Option<u8> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.code)
    }

    /// Position of `code` in entry order.
    pub fn index_of(&self, code: u8) -> Option<usize> {
        self.entries.iter().position(|e| e.code == code)
    }

    /// JSON manifest `{scheme_id, entries, recode, notes}`.
    pub fn manifest(&self, recode: Option<&RecodeMap>, notes: &[String]) -> serde_json::Value {
        let recode: Vec<_> = recode
            .map(|m| {
                m.mapping
                    .iter()
                    .map(|(&from, &to)| serde_json::json!({ "from": from, "to": to }))
                    .collect()
            })
            .unwrap_or_default();
        serde_json::json!({
            "scheme_id": self.scheme_id,
            "entries": self.entries,
            "recode": recode,
            "notes": notes,
        })
    }

    pub fn write_manifest(&self, recode: Option<&RecodeMap>, notes: &[String], path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest(recode, notes))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    #[default]
    Error,
    MapToNodata,
}

/// Total map from every code of one scheme onto codes of another.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecodeMap {
    pub from_scheme: String,
    pub to_scheme: String,
    mapping: BTreeMap<u8, u8>,
    pub unknown_policy: UnknownPolicy,
}

impl RecodeMap {
    pub fn new(
        from: &LabelScheme,
        to: &LabelScheme,
        pairs: &[(u8, u8)],
        unknown_policy: UnknownPolicy,
    ) -> Result<Self> {
        let mut mapping = BTreeMap::new();
        for &(a, b) in pairs {
            if !from.contains(a) {
                return Err(Error::InvalidArgument(format!(
                    "code {a} is not in `{}`",
                    from.id()
                )));
            }
            if !to.contains(b) {
                return Err(Error::InvalidArgument(format!(
                    "code {b} is not in `{}`",
                    to.id()
                )));
            }
            if mapping.insert(a, b).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "code {a} of `{}` is mapped twice",
                    from.id()
                )));
            }
        }
        if let Some(missing) = from.entries().iter().find(|e| !mapping.contains_key(&e.code)) {
            return Err(Error::InvalidArgument(format!(
                "code {} ({}) of `{}` is not mapped",
                missing.code,
                missing.name,
                from.id()
            )));
        }
        Ok(RecodeMap {
            from_scheme: from.id().to_string(),
            to_scheme: to.id().to_string(),
            mapping,
            unknown_policy,
        })
    }

    pub fn identity(scheme: &LabelScheme) -> Self {
        RecodeMap {
            from_scheme: scheme.id().to_string(),
            to_scheme: scheme.id().to_string(),
            mapping: scheme.entries().iter().map(|e| (e.code, e.code)).collect(),
            unknown_policy: UnknownPolicy::Error,
        }
    }

    pub fn with_policy(mut self, policy: UnknownPolicy) -> Self {
        self.unknown_policy = policy;
        self
    }

    pub fn get(&self, code: u8) -> Option<u8> {
        self.mapping.get(&code).copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.mapping.iter().map(|(&a, &b)| (a, b))
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

/// The three built-in schemes and the two maps onto the General scheme.
#[derive(Clone, Debug)]
pub struct BuiltinSchemes {
    pub nalcms: LabelScheme,
    pub corine: LabelScheme,
    pub general: LabelScheme,
    pub nalcms_to_general: RecodeMap,
    pub corine_to_general: RecodeMap,
    /// Table conflicts and codes assigned outside the published table.
    pub notes: Vec<String>,
}

const GENERAL_CLASSES: [(&str, [u8; 3]); 8] = [
    ("Forest", [0, 100, 0]),
    ("Grassland", [180, 200, 90]),
    ("Wetland", [100, 160, 140]),
    ("Cropland", [230, 175, 100]),
    ("Barren", [170, 170, 170]),
    ("Settlement", [220, 30, 40]),
    ("Water", [70, 110, 165]),
    ("Snow and glaciers", [240, 245, 255]),
];

// Official NALCMS legend order; `in_table` marks the classes present in the
// recoding table.
const NALCMS_CLASSES: [(&str, [u8; 3], &str, bool); 19] = [
    ("Temperate or sub-polar needleleaf forest", [0, 61, 0], "Forest", true),
    ("Sub-polar taiga needleleaf forest", [148, 156, 112], "Forest", true),
    ("Tropical or sub-tropical broadleaf evergreen forest", [0, 99, 0], "Forest", false),
    ("Tropical or sub-tropical broadleaf deciduous forest", [30, 171, 5], "Forest", false),
    ("Temperate or sub-polar broadleaf deciduous forest", [20, 140, 61], "Forest", true),
    ("Mixed forest", [92, 117, 43], "Forest", true),
    ("Tropical or sub-tropical shrubland", [179, 158, 43], "Grassland", false),
    ("Temperate or sub-polar shrubland", [179, 138, 51], "Grassland", true),
    ("Tropical or sub-tropical grassland", [232, 220, 94], "Grassland", false),
    ("Temperate or sub-polar grassland", [225, 207, 138], "Grassland", true),
    ("Sub-polar or polar shrubland lichen moss", [156, 117, 84], "Grassland", true),
    ("Sub-polar or polar grassland lichen moss", [186, 212, 143], "Grassland", true),
    ("Sub-polar or polar barren lichen moss", [64, 138, 112], "Barren", false),
    ("Wetland", [107, 163, 138], "Wetland", true),
    ("Cropland", [230, 174, 102], "Cropland", true),
    ("Barren lands", [168, 171, 174], "Barren", true),
    ("Urban", [220, 33, 38], "Settlement", true),
    ("Water", [76, 112, 163], "Water", true),
    ("Snow and ice", [255, 250, 255], "Snow and glaciers", true),
];

// Recoding-table row order, first occurrence of each class.
const CORINE_CLASSES: [(&str, [u8; 3], &str); 31] = [
    ("Broad-leaved forest", [128, 255, 0], "Forest"),
    ("Coniferous forest", [0, 166, 0], "Forest"),
    ("Mixed forest", [77, 255, 0], "Forest"),
    ("Transitional woodland shrub", [166, 242, 0], "Grassland"),
    ("Sparsely vegetated areas", [204, 255, 204], "Grassland"),
    ("Green urban areas", [255, 166, 255], "Grassland"),
    ("Moors and heathland", [166, 255, 128], "Wetland"),
    ("Inland marshes", [166, 166, 255], "Wetland"),
    ("Peat bog", [77, 77, 255], "Wetland"),
    ("Non irrigated arable land", [255, 255, 168], "Cropland"),
    ("Pasture", [230, 230, 77], "Cropland"),
    ("Complex cultivation pattern", [255, 230, 77], "Cropland"),
    (
        "Land principally occupied by agriculture with significant areas of natural vegetation",
        [230, 204, 77],
        "Cropland",
    ),
    ("Beaches dunes sands", [230, 230, 230], "Barren"),
    ("Bare rock", [204, 204, 204], "Barren"),
    ("Burnt areas", [64, 64, 64], "Barren"),
    ("Mineral extraction site", [166, 0, 204], "Barren"),
    ("Continuous urban fabric", [230, 0, 77], "Settlement"),
    ("Discontinuous urban fabric", [255, 0, 0], "Settlement"),
    ("Industrial or commercial units", [204, 77, 242], "Settlement"),
    ("Road and rail networks and associated lands", [204, 0, 0], "Settlement"),
    ("Port areas", [230, 204, 204], "Settlement"),
    ("Airports", [230, 204, 230], "Settlement"),
    ("Dump site", [166, 77, 0], "Settlement"),
    ("Construction site", [255, 77, 255], "Settlement"),
    ("Sport and leisure facilities", [255, 230, 255], "Settlement"),
    ("Intertidal flats", [166, 166, 230], "Water"),
    ("Water courses", [0, 204, 242], "Water"),
    ("Water bodies", [128, 242, 230], "Water"),
    ("Sea and ocean", [230, 242, 255], "Water"),
    ("Glaciers and perpetual snow", [166, 230, 204], "Snow and glaciers"),
];

fn entries<'a>(rows: impl Iterator<Item = (&'a str, [u8; 3])>) -> Vec<ClassEntry> {
    rows.enumerate()
        .map(|(i, (name, color))| ClassEntry {
            code: i as u8 + 1,
            name: name.to_string(),
            color,
        })
        .collect()
}

/// NALCMS (codes 1–19), CORINE (1–31), General (1–8) and the two recode maps.
pub fn builtin_schemes() -> BuiltinSchemes {
    let general = LabelScheme::new(GENERAL, entries(GENERAL_CLASSES.iter().map(|&(n, c)| (n, c))))
        .expect("general scheme is well formed");
    let nalcms = LabelScheme::new(NALCMS, entries(NALCMS_CLASSES.iter().map(|&(n, c, _, _)| (n, c))))
        .expect("nalcms scheme is well formed");
    let corine = LabelScheme::new(CORINE, entries(CORINE_CLASSES.iter().map(|&(n, c, _)| (n, c))))
        .expect("corine scheme is well formed");

    let to_general = |name: &str| general.code_of(name).expect("target class exists");
    let nalcms_pairs: Vec<(u8, u8)> = NALCMS_CLASSES
        .iter()
        .enumerate()
        .map(|(i, &(_, _, g, _))| (i as u8 + 1, to_general(g)))
        .collect();
    let corine_pairs: Vec<(u8, u8)> = CORINE_CLASSES
        .iter()
        .enumerate()
        .map(|(i, &(_, _, g))| (i as u8 + 1, to_general(g)))
        .collect();
    let nalcms_to_general = RecodeMap::new(&nalcms, &general, &nalcms_pairs, UnknownPolicy::Error)
        .expect("nalcms map is total");
    let corine_to_general = RecodeMap::new(&corine, &general, &corine_pairs, UnknownPolicy::Error)
        .expect("corine map is total");

    let mut notes = vec![
        "corine: `Beaches dunes sands` is listed under both Barren and Settlement; it is assigned to Barren".to_string(),
    ];
    notes.extend(
        NALCMS_CLASSES
            .iter()
            .enumerate()
            .filter(|(_, row)| !row.3)
            .map(|(i, &(n, _, g, _))| {
                format!("nalcms: code {} `{n}` is absent from the recoding table and maps to {g}", i + 1)
            }),
    );
    BuiltinSchemes {
        nalcms,
        corine,
        general,
        nalcms_to_general,
        corine_to_general,
        notes,
    }
}

/// NALCMS and CORINE class names as printed in the recoding table, per General class.
pub fn recoding_table_rows() -> Vec<(&'static str, Vec<&'static str>, Vec<&'static str>)> {
    GENERAL_CLASSES
        .iter()
        .map(|&(g, _)| {
            let nal = NALCMS_CLASSES
                .iter()
                .filter(|r| r.3 && r.2 == g)
                .map(|r| r.0)
                .collect();
            let cor = CORINE_CLASSES.iter().filter(|r| r.2 == g).map(|r| r.0).collect();
            (g, nal, cor)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn general_name(b: &BuiltinSchemes, map: &RecodeMap, from: &LabelScheme, name: &str) -> String {
        let code = from.code_of(name).unwrap();
        let g = map.get(code).unwrap();
        b.general.entry(g).unwrap().name.clone()
    }

    #[test]
    fn sizes_and_code_ranges() {
        let b = builtin_schemes();
        assert_eq!(b.nalcms.len(), 19);
        assert_eq!(b.corine.len(), 31);
        assert_eq!(b.general.len(), 8);
        for (s, n) in [(&b.nalcms, 19u8), (&b.corine, 31), (&b.general, 8)] {
            let codes: Vec<u8> = s.entries().iter().map(|e| e.code).collect();
            assert_eq!(codes, (1..=n).collect::<Vec<_>>());
        }
        let names: Vec<&str> = b.general.entries().iter().map(|e| e.name.as_str()).collect();
        assert_eq!(
            names,
            ["Forest", "Grassland", "Wetland", "Cropland", "Barren", "Settlement", "Water", "Snow and glaciers"]
        );
    }

    #[test]
    fn table_examples() {
        let b = builtin_schemes();
        let n = |s| general_name(&b, &b.nalcms_to_general, &b.nalcms, s);
        let c = |s| general_name(&b, &b.corine_to_general, &b.corine, s);
        assert_eq!(n("Temperate or sub-polar needleleaf forest"), "Forest");
        assert_eq!(c("Glaciers and perpetual snow"), "Snow and glaciers");
        assert_eq!(c("Moors and heathland"), "Wetland");
        assert_eq!(c("Beaches dunes sands"), "Barren");
        assert_eq!(c("Green urban areas"), "Grassland");
        assert_eq!(n("Urban"), "Settlement");
    }

    #[test]
    fn table_rows_match_published_layout() {
        let rows = recoding_table_rows();
        let nal: Vec<usize> = rows.iter().map(|r| r.1.len()).collect();
        let cor: Vec<usize> = rows.iter().map(|r| r.2.len()).collect();
        assert_eq!(nal, [4, 4, 1, 1, 1, 1, 1, 1]);
        // Settlement prints ten rows in the table; the duplicated Barren row is kept once.
        assert_eq!(cor, [3, 3, 3, 4, 4, 9, 4, 1]);
    }

    #[test]
    fn scheme_validation() {
        let e = |code, name: &str| ClassEntry {
            code,
            name: name.into(),
            color: [0; 3],
        };
        assert!(LabelScheme::new("x", vec![e(1, "a"), e(1, "b")]).is_err());
        assert!(LabelScheme::new("x", vec![e(1, "a"), e(2, "a")]).is_err());
        assert!(LabelScheme::new("x", vec![e(255, "a")]).is_err());
        assert!(LabelScheme::new("x", vec![]).is_err());
    }

    #[test]
    fn recode_map_requires_totality() {
        let b = builtin_schemes();
        let partial: Vec<(u8, u8)> = (1..=18).map(|c| (c, 1)).collect();
        assert!(RecodeMap::new(&b.nalcms, &b.general, &partial, UnknownPolicy::Error).is_err());
        let bad_target: Vec<(u8, u8)> = (1..=19).map(|c| (c, 9)).collect();
        assert!(RecodeMap::new(&b.nalcms, &b.general, &bad_target, UnknownPolicy::Error).is_err());
    }

    #[test]
    fn manifest_shape() {
        let b = builtin_schemes();
        let m = b.corine.manifest(Some(&b.corine_to_general), &b.notes);
        assert_eq!(m["scheme_id"], "corine");
        assert_eq!(m["entries"].as_array().unwrap().len(), 31);
        assert_eq!(m["recode"].as_array().unwrap().len(), 31);
        assert_eq!(m["recode"][13], serde_json::json!({"from": 14, "to": 5}));
        assert!(m["notes"][0].as_str().unwrap().contains("Beaches"));
    }
}
