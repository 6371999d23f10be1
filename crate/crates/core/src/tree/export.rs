use std::fmt::Write as _;
use std::path::Path;

use super::StudentTree;
use crate::error::{Error, Result};

fn bad(reason: impl Into<String>) -> Error {
    Error::format("tree file", reason)
}

impl StudentTree {
    /// Indented, human-readable rules. `names` labels features when given.
    pub fn to_text(&self, names: Option<&[String]>) -> String {
        let mut out = String::new();
        self.write_text(0, names, &mut out);
        out
    }

    fn write_text(&self, i: usize, names: Option<&[String]>, out: &mut String) {
        let node = &self.nodes[i];
        let indent = "  ".repeat(node.depth);
        let value = node.value.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ");
        match node.split {
            Some(s) => {
                let name = names
                    .and_then(|n| n.get(s.feature))
                    .cloned()
                    .unwrap_or_else(|| format!("x[{}]", s.feature));
                let _ = writeln!(
                    out,
                    "{indent}node {i}: {name} <= {} (n={}, w={:.3}, value=[{value}])",
                    s.threshold, node.n_samples, node.weight_sum
                );
                self.write_text(s.left, names, out);
                self.write_text(s.right, names, out);
            }
            None => {
                let _ = writeln!(
                    out,
                    "{indent}node {i}: leaf (n={}, w={:.3}, value=[{value}])",
                    node.n_samples, node.weight_sum
                );
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization cannot fail")
    }

    /// Parses and structurally validates a tree written by [`to_json`](Self::to_json).
    pub fn from_json(s: &str) -> Result<Self> {
        let tree: StudentTree = serde_json::from_str(s).map_err(|e| bad(e.to_string()))?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Checks pre-order layout, parent links, depths, feature indices and
    /// value widths.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(bad("no nodes"));
        }
        if self.n_outputs == 0 {
            return Err(bad("zero outputs"));
        }
        let root = &self.nodes[0];
        if root.parent.is_some() || root.depth != 0 {
            return Err(bad("root must have no parent and depth 0"));
        }
        // walk in pre-order; node ids must come out as 0, 1, 2, ...
        let mut stack = vec![0usize];
        let mut next = 0usize;
        while let Some(i) = stack.pop() {
            if i != next {
                return Err(bad(format!("node {i} is not in pre-order position {next}")));
            }
            next += 1;
            let node = &self.nodes[i];
            if node.value.len() != self.n_outputs || node.value.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("node {i} has a malformed value")));
            }
            if !node.weight_sum.is_finite() || node.weight_sum < 0.0 {
                return Err(bad(format!("node {i} has a malformed weight")));
            }
            if let Some(s) = node.split {
                if s.feature >= self.n_features || !s.threshold.is_finite() {
                    return Err(bad(format!("node {i} has a malformed split")));
                }
                for c in [s.left, s.right] {
                    let child = self.nodes.get(c).ok_or_else(|| bad(format!("node {i} child {c} out of range")))?;
                    if child.parent != Some(i) || child.depth != node.depth + 1 {
                        return Err(bad(format!("node {c} has inconsistent parent or depth")));
                    }
                }
                if s.left != i + 1 || s.right <= s.left {
                    return Err(bad(format!("node {i} children are not in pre-order")));
                }
                stack.push(s.right);
                stack.push(s.left);
            }
        }
        if next != self.nodes.len() {
            return Err(bad(format!("{} unreachable nodes", self.nodes.len() - next)));
        }
        Ok(())
    }
}
