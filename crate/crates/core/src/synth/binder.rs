//! Maps a target function's parameters to test-side argument expressions.

use crate::analyzer::FunctionInfo;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub ty: String,
    pub name: String,
}

impl Param {
    pub fn parse(text: &str) -> Option<Param> {
        let text = text.split('=').next().unwrap_or("").trim();
        if text.is_empty() || text == "void" || text == "..." {
            return None;
        }
        let split = text
            .rfind(|c: char| !(c.is_alphanumeric() || c == '_'))
            .map(|i| i + 1)
            .unwrap_or(0);
        let (ty, name) = text.split_at(split);
        let ty = ty.trim();
        if ty.is_empty() {
            // unnamed parameter: the whole text is the type
            return Some(Param {
                ty: text.to_string(),
                name: String::new(),
            });
        }
        Some(Param {
            ty: ty.to_string(),
            name: name.to_string(),
        })
    }

    pub fn is_pointer(&self) -> bool {
        self.ty.ends_with('*')
    }

    /// Element type of a pointer parameter, qualifiers dropped.
    pub fn pointee(&self) -> String {
        let base = self.ty.trim_end_matches('*').replace("const", "").replace("volatile", "");
        base.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    fn base_type(&self) -> String {
        self.ty.replace("const", "").split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

const RANK_NAMES: &[&str] = &["rank", "my_rank", "myrank", "me", "self_rank", "proc_id", "rank_id"];
const PARTNER_NAMES: &[&str] = &[
    "partner", "partner_rank", "peer", "peer_rank", "other", "other_rank", "dest", "src", "source", "neighbor",
];
const SIZE_NAMES: &[&str] = &[
    "n", "size", "count", "len", "length", "num", "nelem", "num_elements", "rows", "cols", "nx", "total_size",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundCall {
    /// Setup statements (buffer declarations), one per line.
    pub setup: Vec<String>,
    /// Call expression, e.g. `parallel_sum(hpct_buf0.data(), hpct_n)`.
    pub call: String,
    /// Buffers whose contents are part of the observation.
    pub observed_buffers: Vec<String>,
    pub returns_value: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindModel {
    OpenMp,
    Mpi,
}

/// Bind every parameter of `f` by type and name. `n_expr` names the
/// variable holding the input size. Pointer buffers are filled with 1..n.
pub fn bind_call(f: &FunctionInfo, model: BindModel, n_expr: &str) -> BoundCall {
    let params: Vec<Param> = f.parameter_texts.iter().filter_map(|t| Param::parse(t)).collect();
    let has_pointer = params.iter().any(|p| p.is_pointer() && p.name != "argv");
    let mut setup = Vec::new();
    let mut args = Vec::new();
    let mut observed = Vec::new();
    let target = if f.name == "main" { "hpct_target_main" } else { f.name.as_str() };
    for (i, p) in params.iter().enumerate() {
        let lname = p.name.to_ascii_lowercase();
        let base = p.base_type();
        let arg = if f.name == "main" && (p.name == "argc" || i == 0) {
            "argc".to_string()
        } else if f.name == "main" && (p.name == "argv" || i == 1) {
            "argv".to_string()
        } else if base == "MPI_Comm" {
            "MPI_COMM_WORLD".to_string()
        } else if p.is_pointer() {
            let buf = format!("hpct_buf{i}");
            let elem = p.pointee();
            let elem = if elem.is_empty() || elem == "void" { "double".to_string() } else { elem };
            setup.push(format!("std::vector<{elem}> {buf}({n_expr});"));
            setup.push(format!(
                "for (int hpct_i = 0; hpct_i < {n_expr}; ++hpct_i) {buf}[hpct_i] = ({elem})(hpct_i + 1);"
            ));
            if !p.ty.contains("const") {
                observed.push(buf.clone());
            }
            format!("{buf}.data()")
        } else if model == BindModel::Mpi && RANK_NAMES.contains(&lname.as_str()) {
            "hpct_rank".to_string()
        } else if model == BindModel::Mpi && PARTNER_NAMES.contains(&lname.as_str()) {
            "(hpct_rank + 1) % hpct_size".to_string()
        } else if SIZE_NAMES.contains(&lname.as_str()) {
            if model == BindModel::Mpi && !has_pointer {
                "hpct_size".to_string()
            } else {
                n_expr.to_string()
            }
        } else if matches!(base.as_str(), "double" | "float" | "long double") {
            "1.5".to_string()
        } else if base == "bool" {
            "true".to_string()
        } else {
            format!("{n_expr} / 2")
        };
        args.push(arg);
    }
    let ret = f.return_type_text.replace("static", "").replace("inline", "");
    let returns_value = !ret.trim().is_empty() && ret.trim() != "void";
    // a returned value is the result; buffers then are inputs
    if returns_value {
        observed.clear();
    }
    BoundCall {
        setup,
        call: format!("{target}({})", args.join(", ")),
        observed_buffers: observed,
        returns_value,
    }
}
