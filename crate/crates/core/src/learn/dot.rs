//! Graphviz export of fitted trees.

use std::fmt::Write as _;

use super::tree::{Task, Tree};
use crate::scalar::{format_sig9, Scalar};

const TOP_RGB: (u8, u8, u8) = (0x39, 0x9d, 0xe5);
const LOW_RGB: (u8, u8, u8) = (0xe5, 0x81, 0x39);

/// Fill colour blended from white: blue for class 1, orange for class 0,
/// with intensity `|p - 0.5| * 2` where `p` is the class-1 fraction.
pub fn node_color(p_top: f64) -> String {
    let alpha = ((p_top - 0.5).abs() * 2.0).clamp(0.0, 1.0);
    let (r, g, b) = if p_top >= 0.5 { TOP_RGB } else { LOW_RGB };
    let mix = |c: u8| (255.0 - alpha * (255.0 - f64::from(c))).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r), mix(g), mix(b))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn export_dot<F: Scalar>(tree: &Tree<F>, names: &[String]) -> String {
    let mut out = String::from("digraph Tree {\nnode [shape=box, style=\"filled, rounded\", fontname=\"helvetica\"];\nedge [fontname=\"helvetica\"];\n");
    for node in 0..tree.n_nodes() {
        let mut label = String::new();
        if let Some(f) = tree.feature[node] {
            let name = names.get(f).cloned().unwrap_or_else(|| format!("x[{f}]"));
            let _ = write!(
                label,
                "{} <= {}\\n",
                escape(&name),
                format_sig9(tree.threshold[node].as_f64())
            );
        }
        let _ = write!(label, "samples = {}", tree.samples[node]);
        let color = match tree.task {
            Task::Classification => {
                let c = tree.class_counts[node];
                let _ = write!(label, "\\nvalue = [{}, {}]", c[0], c[1]);
                node_color(tree.value[node].as_f64())
            }
            Task::Regression => {
                let _ = write!(
                    label,
                    "\\nvalue = {}",
                    format_sig9(tree.value[node].as_f64())
                );
                "#ffffff".to_string()
            }
        };
        let _ = writeln!(out, "{node} [label=\"{label}\", fillcolor=\"{color}\"];");
        if !tree.is_leaf(node) {
            let _ = writeln!(out, "{node} -> {} [label=\"yes\"];", tree.left[node]);
            let _ = writeln!(out, "{node} -> {} [label=\"no\"];", tree.right[node]);
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::tree::fit_cart;
    use crate::matrix::Matrix;

    #[test]
    fn node_and_edge_counts() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let t: Tree<f64> = fit_cart(&x, &[0, 1], None).unwrap();
        let dot = export_dot(&t, &["ppvt".to_string()]);
        assert!(dot.starts_with("digraph Tree {") && dot.trim_end().ends_with('}'));
        assert_eq!(
            dot.matches("[label=\"samples").count() + dot.matches("[label=\"ppvt").count(),
            3
        );
        assert_eq!(dot.matches("->").count(), 2);
        assert!(dot.contains("ppvt <= 0.5"));

        let leaf: Tree<f64> = fit_cart(&x, &[0, 1], Some(0)).unwrap();
        let dot = export_dot(&leaf, &[]);
        assert_eq!(dot.matches("fillcolor").count(), 1);
        assert_eq!(dot.matches("->").count(), 0);
    }

    #[test]
    fn colors_encode_majority_and_certainty() {
        assert_eq!(node_color(0.5), "#ffffff");
        assert_eq!(node_color(1.0), "#399de5");
        assert_eq!(node_color(0.0), "#e58139");
        let mid = node_color(0.75);
        assert!(mid != "#ffffff" && mid != "#399de5");
    }

    #[test]
    fn balanced_root_is_neutral() {
        let x =
            Matrix::from_rows(&(0..10).map(|i| vec![f64::from(i)]).collect::<Vec<_>>()).unwrap();
        let y = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let t: Tree<f64> = fit_cart(&x, &y, Some(1)).unwrap();
        assert_eq!(t.class_counts[0], [5, 5]);
        let dot = export_dot(&t, &[]);
        assert!(dot
            .lines()
            .any(|l| l.starts_with("0 [") && l.contains("#ffffff")));
    }
}
