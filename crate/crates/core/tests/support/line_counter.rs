//! Text-level corpus statistics that never touch the parser: lines are
//! classified by shape alone.

use std::collections::BTreeMap;

#[derive(Debug, Default, PartialEq, Eq)]
pub struct LineStats {
    /// (verb class, sub-action count) to number of programs.
    pub lengths: BTreeMap<(String, usize), usize>,
    pub objects: BTreeMap<String, usize>,
    pub programs: usize,
}

fn split_args(inner: &str) -> Vec<String> {
    inner
        .split(',')
        .map(|a| a.trim().to_string())
        .filter(|a| !a.is_empty())
        .collect()
}

fn condition_objects(cond: &str) -> Vec<String> {
    if let (Some(l), Some(r)) = (cond.find('('), cond.rfind(')')) {
        return split_args(&cond[l + 1..r]);
    }
    let words: Vec<&str> = cond.split_whitespace().collect();
    let mut out = vec![words[0].to_string()];
    let rest: Vec<&str> = words[1..].iter().copied().filter(|w| *w != "not").collect();
    if rest.len() == 2 && rest[0] == "at" && rest[1] != "workspace" {
        out.push(rest[1].to_string());
    }
    out
}

/// `classes` maps program name to verb class.
pub fn count(text: &str, classes: &BTreeMap<String, String>) -> LineStats {
    let mut stats = LineStats::default();
    let mut current: Option<(String, usize)> = None;
    let flush = |cur: Option<(String, usize)>, stats: &mut LineStats| {
        if let Some((name, n)) = cur {
            *stats.lengths.entry((classes[&name].clone(), n)).or_default() += 1;
            stats.programs += 1;
        }
    };
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("def ") {
            flush(current.take(), &mut stats);
            let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            current = Some((name, 0));
            continue;
        }
        let t = line.trim();
        let Some(cur) = current.as_mut() else { continue };
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let objs = if let Some(cond) = t
            .strip_prefix("if ")
            .or_else(|| t.strip_prefix("while "))
            .and_then(|c| c.strip_suffix(':'))
        {
            condition_objects(cond)
        } else {
            cur.1 += 1;
            let l = t.find('(').expect("call line");
            split_args(&t[l + 1..t.len() - 1])
        };
        for o in objs {
            *stats.objects.entry(o).or_default() += 1;
        }
    }
    flush(current.take(), &mut stats);
    stats
}

pub fn verb_classes(csv_text: &str) -> BTreeMap<String, String> {
    csv_text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (a, b) = l.split_once(',').expect("two columns");
            (a.trim().to_string(), b.trim().to_string())
        })
        .collect()
}
