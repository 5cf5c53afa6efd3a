use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::raster::BinaryMask;
use crate::error::{bail, Error, Result};

/// Per-pixel class labels. A binary plume mask has one class; the mineral
/// task uses several classes that may be active at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    classes: usize,
    values: Vec<u8>,
    multi_hot: bool,
}

impl LabelMask {
    /// `values` is class-major then row-major, each entry 0 or 1.
    pub fn new(
        height: usize,
        width: usize,
        classes: usize,
        values: Vec<u8>,
        multi_hot: bool,
    ) -> Result<Self> {
        if classes == 0 {
            bail!(Shape, "label mask needs at least one class");
        }
        if !multi_hot && classes != 1 {
            bail!(
                Shape,
                "a binary label mask has exactly one class, got {classes}"
            );
        }
        if values.len() != height * width * classes {
            bail!(
                Shape,
                "label mask {height}x{width}x{classes} needs {} values, got {}",
                height * width * classes,
                values.len()
            );
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            bail!(
                Format,
                "label value {} at index {i} is not 0 or 1",
                values[i]
            );
        }
        Ok(Self {
            height,
            width,
            classes,
            values,
            multi_hot,
        })
    }

    /// Binary plume/no-plume label.
    pub fn binary(mask: &BinaryMask) -> Self {
        Self {
            height: mask.height,
            width: mask.width,
            classes: 1,
            values: mask.data.iter().map(|&v| v as u8).collect(),
            multi_hot: false,
        }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::binary(&BinaryMask::zeros(height, width))
    }

    /// Multi-hot label built from one mask per class.
    pub fn multi_hot(masks: &[BinaryMask]) -> Result<Self> {
        let Some(first) = masks.first() else {
            bail!(Shape, "multi-hot label needs at least one class mask");
        };
        if masks.iter().any(|m| !m.same_extent(first)) {
            bail!(Shape, "class masks differ in extent");
        }
        let values = masks
            .iter()
            .flat_map(|m| m.data.iter().map(|&v| v as u8))
            .collect();
        Self::new(first.height, first.width, masks.len(), values, true)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn is_multi_hot(&self) -> bool {
        self.multi_hot
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, class: usize) -> bool {
        self.values[(class * self.height + row) * self.width + col] == 1
    }

    pub fn class_mask(&self, class: usize) -> BinaryMask {
        let plane = self.height * self.width;
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.values[class * plane..(class + 1) * plane]
                .iter()
                .map(|&v| v == 1)
                .collect(),
        }
    }

    pub fn positive_count(&self, class: usize) -> usize {
        let plane = self.height * self.width;
        self.values[class * plane..(class + 1) * plane]
            .iter()
            .filter(|&&v| v == 1)
            .count()
    }

    pub fn has_positive(&self) -> bool {
        self.values.contains(&1)
    }
}

/// Assignment of Tetracorder-style mineral components to aggregated mineral
/// classes. Components mapped to `None` belong to no class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentMap {
    pub assignments: BTreeMap<String, Option<String>>,
}

impl ComponentMap {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Option<&'a str>)>) -> Self {
        Self {
            assignments: pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.map(str::to_string)))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("component map", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn class_of(&self, component: &str) -> Option<&str> {
        self.assignments.get(component).and_then(|c| c.as_deref())
    }

    pub fn components_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.assignments
            .iter()
            .filter(move |(_, c)| c.as_deref() == Some(class))
            .map(|(k, _)| k.as_str())
    }

    pub fn classes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .assignments
            .values()
            .flatten()
            .map(String::as_str)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// One detected mineral component layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLayer {
    pub id: String,
    pub mask: BinaryMask,
}

/// Union of every component layer assigned to `class`.
pub fn aggregate_minerals(
    components: &[ComponentLayer],
    map: &ComponentMap,
    class: &str,
) -> Result<BinaryMask> {
    if map.components_of(class).next().is_none() {
        bail!(
            InvalidArgument,
            "no component is assigned to class {class:?}"
        );
    }
    let Some(first) = components.first() else {
        bail!(InvalidArgument, "component stack is empty");
    };
    if components.iter().any(|c| !c.mask.same_extent(&first.mask)) {
        bail!(Shape, "component masks differ in extent");
    }
    let mut out = BinaryMask::zeros(first.mask.height, first.mask.width);
    for layer in components
        .iter()
        .filter(|l| map.class_of(&l.id) == Some(class))
    {
        for (o, &v) in out.data.iter_mut().zip(&layer.mask.data) {
            *o |= v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(id: &str, h: usize, w: usize, on: &[(usize, usize)]) -> ComponentLayer {
        let mut mask = BinaryMask::zeros(h, w);
        for &(r, c) in on {
            mask.set(r, c, true);
        }
        ComponentLayer {
            id: id.into(),
            mask,
        }
    }

    #[test]
    fn binary_labels_reject_many_classes() {
        assert!(LabelMask::new(1, 1, 2, vec![0, 1], false).is_err());
        assert!(LabelMask::new(1, 1, 1, vec![2], false).is_err());
        assert!(LabelMask::new(1, 1, 2, vec![0, 1], true).is_ok());
    }

    #[test]
    fn disjoint_components_union_sums_areas() {
        let map = ComponentMap::from_pairs([
            ("a", Some("Hematite")),
            ("b", Some("Hematite")),
            ("c", Some("Hematite")),
        ]);
        let comps = vec![
            layer("a", 4, 4, &[(0, 0), (0, 1)]),
            layer("b", 4, 4, &[(2, 2)]),
            layer("c", 4, 4, &[(3, 0), (3, 1), (3, 2)]),
        ];
        let out = aggregate_minerals(&comps, &map, "Hematite").unwrap();
        let total: usize = comps.iter().map(|c| c.mask.count()).sum();
        assert_eq!(out.count(), total);
    }

    #[test]
    fn all_zero_components_give_empty_class() {
        let map = ComponentMap::from_pairs([("a", Some("Goethite"))]);
        let out = aggregate_minerals(&[layer("a", 3, 3, &[])], &map, "Goethite").unwrap();
        assert_eq!(out.count(), 0);
    }

    #[test]
    fn other_class_components_are_excluded() {
        let map = ComponentMap::from_pairs([
            ("a", Some("Hematite")),
            ("b", Some("Kaolinite")),
            ("c", None),
        ]);
        let comps = vec![
            layer("a", 2, 2, &[(0, 0)]),
            layer("b", 2, 2, &[(1, 1)]),
            layer("c", 2, 2, &[(0, 1)]),
        ];
        let out = aggregate_minerals(&comps, &map, "Hematite").unwrap();
        assert_eq!(out.data, vec![true, false, false, false]);
        assert!(aggregate_minerals(&comps, &map, "Calcite").is_err());
    }

    #[test]
    fn component_map_json_is_a_plain_object() {
        let map = ComponentMap::from_pairs([("7", Some("Hematite")), ("9", None)]);
        let json = serde_json::to_string(&map).unwrap();
        assert_eq!(json, r#"{"7":"Hematite","9":null}"#);
        let back: ComponentMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.classes(), vec!["Hematite"]);
    }
}
