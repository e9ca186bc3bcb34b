//! Plain-text dump of the lowered standard form, for offline cross-checks
//! with other conic engines.
//!
//! The format is line oriented, one record per line:
//!
//! ```text
//! conic-standard-form 1
//! rows <m> cone_vars <nc> free_vars <nf> objective_constant <v>
//! cone nonneg <n> | cone soc <n> | cone psd <order>
//! c <cone|free> <index> <value>
//! b <row> <value>
//! a <cone|free> <row> <col> <value>
//! end
//! ```
//!
//! Only nonzero entries are listed. PSD cones use the lower-triangular
//! column-major svec layout with off-diagonal entries scaled by `sqrt(2)`.
//! The program is `min c'x  s.t.  A x = b,  x_cone in K`.

use std::fmt::Write;

use crate::cone::Cone;
use crate::problem::ConicProblem;

impl ConicProblem {
    pub fn dump_standard_form(&self) -> String {
        let (sf, _) = self.standard_form();
        let mut out = String::new();
        let m = sf.b.len();
        let nc = sf.c_c.len();
        let nf = sf.c_f.len();
        let _ = writeln!(out, "conic-standard-form 1");
        let _ = writeln!(
            out,
            "rows {m} cone_vars {nc} free_vars {nf} objective_constant {:e}",
            self.objective_constant()
        );
        for cone in &sf.cones {
            let size = match *cone {
                Cone::Nonneg(n) | Cone::Soc(n) => n,
                Cone::Psd(k) => k,
            };
            let _ = writeln!(out, "cone {} {size}", cone.name());
        }
        for (i, v) in sf.c_c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "c cone {i} {v:e}");
        }
        for (i, v) in sf.c_f.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "c free {i} {v:e}");
        }
        for (i, v) in sf.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            let _ = writeln!(out, "b {i} {v:e}");
        }
        for (tag, a) in [("cone", &sf.a_c), ("free", &sf.a_f)] {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    let v = a[(r, c)];
                    if v != 0.0 {
                        let _ = writeln!(out, "a {tag} {r} {c} {v:e}");
                    }
                }
            }
        }
        out.push_str("end\n");
        out
    }
}
