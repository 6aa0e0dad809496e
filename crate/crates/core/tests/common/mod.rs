//! Random policy/snapshot generators and brute-force oracles shared by the
//! integration tests. The oracles resolve names by scanning declarations
//! directly and never touch the library's bitset index.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub enum GenSet {
    One(String),
    Set(Vec<String>, Vec<String>),
    All,
    SelfT,
}

#[derive(Debug, Clone)]
pub struct GenRule {
    pub never: bool,
    pub source: GenSet,
    pub target: GenSet,
    pub class: String,
    /// `None` is `*`.
    pub perms: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone)]
pub struct GenTransition {
    pub subject: String,
    pub object: String,
    pub class: String,
    pub result: String,
}

#[derive(Debug, Clone, Default)]
pub struct GenPolicy {
    pub classes: BTreeMap<String, Vec<String>>,
    pub attributes: Vec<String>,
    /// Type name and its attributes.
    pub types: Vec<(String, Vec<String>)>,
    pub rules: Vec<GenRule>,
    pub transitions: Vec<GenTransition>,
}

pub struct GenParams {
    pub max_types: usize,
    pub max_attrs: usize,
    pub max_rules: usize,
    pub neverallow_ratio: f64,
    pub max_transitions: usize,
    /// Names given to the first types instead of generated ones.
    pub special: &'static [&'static str],
    pub classes: Vec<(&'static str, Vec<&'static str>)>,
}

impl GenParams {
    pub fn small() -> Self {
        Self {
            max_types: 30,
            max_attrs: 5,
            max_rules: 200,
            neverallow_ratio: 0.15,
            max_transitions: 10,
            special: &[],
            classes: vec![
                (
                    "file",
                    vec!["read", "write", "open", "getattr", "execute", "execute_no_trans"],
                ),
                ("dir", vec!["search", "read", "open"]),
                ("process", vec!["transition", "fork"]),
            ],
        }
    }

    pub fn lint() -> Self {
        Self {
            special: &[
                "untrusted_app",
                "system_app",
                "unlabeled",
                "default_prop",
                "proc_security",
                "tee",
                "lnk_target",
            ],
            classes: vec![
                (
                    "file",
                    vec!["read", "write", "open", "getattr", "execute", "execute_no_trans"],
                ),
                ("dir", vec!["search", "read", "open"]),
                ("lnk_file", vec!["read", "open"]),
                ("process", vec!["transition", "fork"]),
            ],
            ..Self::small()
        }
    }

    pub fn device() -> Self {
        Self {
            max_types: 12,
            max_attrs: 3,
            max_rules: 60,
            neverallow_ratio: 0.0,
            max_transitions: 0,
            special: &[],
            classes: vec![
                ("file", vec!["read", "write", "open", "execute", "getattr"]),
                ("dir", vec!["search", "read", "open", "write"]),
                ("chr_file", vec!["read", "write", "open"]),
                ("lnk_file", vec!["read"]),
                ("sock_file", vec!["write", "open"]),
            ],
        }
    }
}

const PREFIXES: [&str; 7] = ["app", "sys", "hal", "vnd", "zygote", "a", "b_"];

fn type_name(i: usize, special: &[&str]) -> String {
    if let Some(s) = special.get(i) {
        return s.to_string();
    }
    format!("{}{}", PREFIXES[i % PREFIXES.len()], i)
}

fn pick<T: Clone>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items.choose(rng).expect("nonempty").clone()
}

impl GenPolicy {
    pub fn random(rng: &mut ChaCha8Rng, p: &GenParams) -> Self {
        let n_types = rng.random_range(1..=p.max_types);
        let n_attrs = rng.random_range(0..=p.max_attrs);
        let attributes: Vec<String> = (0..n_attrs).map(|i| format!("attr{i}")).collect();
        let types: Vec<(String, Vec<String>)> = (0..n_types)
            .map(|i| {
                let attrs = attributes.iter().filter(|_| rng.random_bool(0.35)).cloned().collect();
                (type_name(i, p.special), attrs)
            })
            .collect();
        let classes: BTreeMap<String, Vec<String>> = p
            .classes
            .iter()
            .map(|(c, ps)| (c.to_string(), ps.iter().map(|s| s.to_string()).collect()))
            .collect();

        let names: Vec<String> = types
            .iter()
            .map(|(t, _)| t.clone())
            .chain(attributes.iter().cloned())
            .collect();
        let type_names: Vec<String> = types.iter().map(|(t, _)| t.clone()).collect();
        let class_names: Vec<String> = classes.keys().cloned().collect();

        let gen_set = |rng: &mut ChaCha8Rng, target: bool| -> GenSet {
            match rng.random_range(0..100) {
                0..=44 => GenSet::One(pick(rng, &names)),
                45..=79 => {
                    let pos: Vec<String> = (0..rng.random_range(1..=3)).map(|_| pick(rng, &names)).collect();
                    let neg: Vec<String> = (0..rng.random_range(0..=2)).map(|_| pick(rng, &type_names)).collect();
                    GenSet::Set(pos, neg)
                }
                80..=86 => GenSet::All,
                _ if target => GenSet::SelfT,
                _ => GenSet::One(pick(rng, &names)),
            }
        };

        let n_rules = rng.random_range(0..=p.max_rules);
        let mut rules = Vec::with_capacity(n_rules);
        for _ in 0..n_rules {
            let class = pick(rng, &class_names);
            let perms = if rng.random_bool(0.05) {
                None
            } else {
                let all = &classes[&class];
                let mut chosen: BTreeSet<String> = all.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
                if chosen.is_empty() {
                    chosen.insert(pick(rng, all));
                }
                Some(chosen)
            };
            rules.push(GenRule {
                never: rng.random_bool(p.neverallow_ratio),
                source: gen_set(rng, false),
                target: gen_set(rng, true),
                class,
                perms,
            });
        }

        let n_trans = if p.max_transitions == 0 {
            0
        } else {
            rng.random_range(0..=p.max_transitions)
        };
        let transitions = (0..n_trans)
            .map(|_| GenTransition {
                subject: pick(rng, &names),
                object: pick(rng, &names),
                class: if rng.random_bool(0.7) {
                    "process".into()
                } else {
                    "file".into()
                },
                result: pick(rng, &type_names),
            })
            .collect();

        GenPolicy {
            classes,
            attributes,
            types,
            rules,
            transitions,
        }
    }

    /// Policy text and the 1-based line of each rule.
    pub fn to_text(&self) -> (String, Vec<usize>) {
        let mut out = String::new();
        let mut line = 0;
        let mut push = |out: &mut String, s: String| {
            out.push_str(&s);
            out.push('\n');
            line += 1;
            line
        };
        for (c, perms) in &self.classes {
            push(&mut out, format!("class {c} {{ {} }};", perms.join(" ")));
        }
        for a in &self.attributes {
            push(&mut out, format!("attribute {a};"));
        }
        for (t, attrs) in &self.types {
            let mut s = format!("type {t}");
            for a in attrs {
                write!(s, ", {a}").unwrap();
            }
            s.push(';');
            push(&mut out, s);
        }
        let set = |s: &GenSet| match s {
            GenSet::One(n) => n.clone(),
            GenSet::Set(pos, neg) => {
                let mut parts: Vec<String> = pos.clone();
                parts.extend(neg.iter().map(|n| format!("-{n}")));
                format!("{{ {} }}", parts.join(" "))
            }
            GenSet::All => "*".into(),
            GenSet::SelfT => "self".into(),
        };
        let mut lines = Vec::new();
        for r in &self.rules {
            let perms = match &r.perms {
                None => "*".to_string(),
                Some(p) => format!("{{ {} }}", p.iter().cloned().collect::<Vec<_>>().join(" ")),
            };
            let kw = if r.never { "neverallow" } else { "allow" };
            lines.push(push(
                &mut out,
                format!("{kw} {} {}:{} {perms};", set(&r.source), set(&r.target), r.class),
            ));
        }
        for t in &self.transitions {
            push(
                &mut out,
                format!("type_transition {} {}:{} {};", t.subject, t.object, t.class, t.result),
            );
        }
        (out, lines)
    }

    pub fn allows(&self) -> impl Iterator<Item = &GenRule> {
        self.rules.iter().filter(|r| !r.never)
    }
}

/// (neverallow index, allow index, witness source, witness target, perms or
/// `None` for all).
pub type Violation = (usize, usize, String, String, Option<BTreeSet<String>>);

/// Name-level resolution, written independently of the library.
pub struct Oracle<'a> {
    pub policy: &'a GenPolicy,
    members: BTreeMap<&'a str, BTreeSet<&'a str>>,
    all: BTreeSet<&'a str>,
}

impl<'a> Oracle<'a> {
    pub fn new(policy: &'a GenPolicy) -> Self {
        let mut members: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for a in &policy.attributes {
            members.insert(a, BTreeSet::new());
        }
        for (t, attrs) in &policy.types {
            for a in attrs {
                members.get_mut(a.as_str()).unwrap().insert(t);
            }
        }
        let all = policy.types.iter().map(|(t, _)| t.as_str()).collect();
        Self { policy, members, all }
    }

    pub fn name(&self, n: &'a str) -> BTreeSet<&'a str> {
        match self.members.get(n) {
            Some(m) => m.clone(),
            None if self.all.contains(n) => [n].into(),
            None => BTreeSet::new(),
        }
    }

    /// Types denoted by `set` when the source is `source`.
    pub fn resolve(&self, set: &'a GenSet, source: Option<&'a str>) -> BTreeSet<&'a str> {
        match set {
            GenSet::One(n) => self.name(n),
            GenSet::Set(pos, neg) => {
                let mut out: BTreeSet<&str> = pos.iter().flat_map(|n| self.name(n)).collect();
                for n in neg {
                    for t in self.name(n) {
                        out.remove(t);
                    }
                }
                out
            }
            GenSet::All => self.all.clone(),
            GenSet::SelfT => source.into_iter().collect(),
        }
    }

    pub fn pairs(&self, r: &'a GenRule) -> Vec<(&'a str, &'a str)> {
        let mut out = Vec::new();
        for s in self.resolve(&r.source, None) {
            for t in self.resolve(&r.target, Some(s)) {
                out.push((s, t));
            }
        }
        out
    }

    pub fn grants(perms: &Option<BTreeSet<String>>, p: &str) -> bool {
        perms.as_ref().is_none_or(|set| set.contains(p))
    }

    /// Expected neverallow violations in neverallow, then allow order.
    pub fn neverallow_violations(&self) -> Vec<Violation> {
        let nevers: Vec<&GenRule> = self.policy.rules.iter().filter(|r| r.never).collect();
        let allows: Vec<&GenRule> = self.policy.allows().collect();
        let mut out = Vec::new();
        for (ni, n) in nevers.iter().enumerate() {
            for (ai, a) in allows.iter().enumerate() {
                if n.class != a.class {
                    continue;
                }
                let perms = match (&n.perms, &a.perms) {
                    (None, None) => None,
                    (None, Some(p)) | (Some(p), None) => Some(p.clone()),
                    (Some(x), Some(y)) => Some(x.intersection(y).cloned().collect()),
                };
                if perms.as_ref().is_some_and(|p| p.is_empty()) {
                    continue;
                }
                let never_pairs: BTreeSet<(&str, &str)> = self.pairs(n).into_iter().collect();
                let witness = self.pairs(a).into_iter().filter(|p| never_pairs.contains(p)).min();
                if let Some((s, t)) = witness {
                    out.push((ni, ai, s.to_owned(), t.to_owned(), perms));
                }
            }
        }
        out
    }

    /// Union of permissions the allow rules grant on (s, t, class); `None`
    /// means everything.
    pub fn granted(&self, s: &str, t: &str, class: &str) -> Option<BTreeSet<String>> {
        let mut union = BTreeSet::new();
        for r in self.policy.allows() {
            if r.class != class {
                continue;
            }
            if self.pairs(r).contains(&(s, t)) {
                union.extend(r.perms.as_ref()?.iter().cloned());
            }
        }
        Some(union)
    }

    pub fn mac(&self, s: &str, t: &str, class: &str, perms: &[&str]) -> bool {
        match self.granted(s, t, class) {
            None => true,
            Some(g) => perms.iter().all(|p| g.contains(*p)),
        }
    }

    /// Line numbers of execute rules on `file` with no functional pair.
    pub fn vestigial_execute_lines(&self, lines: &[usize]) -> BTreeSet<usize> {
        let allow_lines: Vec<(usize, &GenRule)> = self
            .policy
            .rules
            .iter()
            .zip(lines)
            .filter(|(r, _)| !r.never)
            .map(|(r, l)| (*l, r))
            .collect();
        let mut out = BTreeSet::new();
        for (line, r) in &allow_lines {
            if r.class != "file" || !Self::grants(&r.perms, "execute") {
                continue;
            }
            let functional = self.pairs(r).into_iter().any(|(s, t)| {
                let no_trans = allow_lines.iter().any(|(_, r2)| {
                    r2.class == "file"
                        && Self::grants(&r2.perms, "execute_no_trans")
                        && self.pairs(r2).contains(&(s, t))
                });
                let transition = self.policy.transitions.iter().any(|tr| {
                    tr.class == "process" && self.name(&tr.subject).contains(s) && self.name(&tr.object).contains(t)
                });
                no_trans || transition
            });
            if !functional {
                out.insert(*line);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Device snapshots

#[derive(Debug, Clone)]
pub struct GenFile {
    pub path: String,
    pub label: String,
    pub mode: String,
    pub owner: String,
    pub group: String,
}

#[derive(Debug, Clone)]
pub struct GenProcess {
    pub label: String,
    pub user: String,
    pub pid: u32,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct GenDevice {
    pub files: Vec<GenFile>,
    pub processes: Vec<GenProcess>,
    pub groups: BTreeMap<String, BTreeSet<String>>,
}

const USERS: [&str; 5] = ["root", "system", "shell", "u0_a1", "u0_a2"];

fn random_mode(rng: &mut ChaCha8Rng, kind: char) -> String {
    let mut m = String::from(kind);
    for (i, bits) in ["rw", "rw", "rw"].iter().enumerate() {
        for c in bits.chars() {
            m.push(if rng.random_bool(0.6) { c } else { '-' });
        }
        let x = match (i, rng.random_range(0..10)) {
            (_, 0..=4) => 'x',
            (0 | 1, 5) => 's',
            (0 | 1, 6) => 'S',
            (2, 5) => 't',
            (2, 6) => 'T',
            _ => '-',
        };
        m.push(x);
    }
    m
}

impl GenDevice {
    /// Random tree of at most `max_files` entries (root included) labeled
    /// with `types`, plus up to `max_procs` processes.
    pub fn random(rng: &mut ChaCha8Rng, types: &[String], max_files: usize, max_procs: usize) -> Self {
        let n_files = rng.random_range(1..=max_files);
        let mut files = vec![GenFile {
            path: "/".into(),
            label: pick(rng, types),
            mode: random_mode(rng, 'd'),
            owner: "root".into(),
            group: "root".into(),
        }];
        let mut dirs = vec!["/".to_string()];
        for i in 1..n_files {
            let parent = pick(rng, &dirs);
            let kind = *['d', 'd', '-', '-', '-', 'c', 'l', 's'].choose(rng).unwrap();
            let path = if parent == "/" {
                format!("/n{i}")
            } else {
                format!("{parent}/n{i}")
            };
            if kind == 'd' {
                dirs.push(path.clone());
            }
            files.push(GenFile {
                path,
                label: pick(rng, types),
                mode: random_mode(rng, kind),
                owner: pick(rng, &USERS).to_string(),
                group: pick(rng, &USERS).to_string(),
            });
        }
        let n_procs = rng.random_range(0..=max_procs);
        let processes = (0..n_procs)
            .map(|i| GenProcess {
                label: pick(rng, types),
                user: pick(rng, &USERS).to_string(),
                pid: 100 + i as u32 * 7,
                name: format!("proc{i}"),
            })
            .collect();
        let mut groups = BTreeMap::new();
        for u in USERS {
            if rng.random_bool(0.5) {
                let g: BTreeSet<String> = USERS
                    .iter()
                    .filter(|_| rng.random_bool(0.4))
                    .map(|s| s.to_string())
                    .collect();
                groups.insert(u.to_string(), g);
            }
        }
        GenDevice {
            files,
            processes,
            groups,
        }
    }

    /// Recorded-format text: (ps, ls, groups).
    pub fn to_text(&self) -> (String, String, String) {
        let mut ps = String::from("LABEL USER PID PPID NAME\n");
        for p in &self.processes {
            writeln!(ps, "u:r:{}:s0 {} {} 1 {}", p.label, p.user, p.pid, p.name).unwrap();
        }
        let mut by_dir: BTreeMap<&str, Vec<&GenFile>> = BTreeMap::new();
        for f in &self.files {
            if f.path == "/" {
                by_dir.entry("/").or_default();
                continue;
            }
            let parent = match f.path.rfind('/') {
                Some(0) => "/",
                Some(i) => &f.path[..i],
                None => unreachable!(),
            };
            by_dir.entry(parent).or_default().push(f);
        }
        let mut ls = String::new();
        let root = &self.files[0];
        for (dir, entries) in &by_dir {
            writeln!(ls, "{dir}:").unwrap();
            if *dir == "/" {
                writeln!(
                    ls,
                    "{} {} {} u:object_r:{}:s0 .",
                    root.mode, root.owner, root.group, root.label
                )
                .unwrap();
            }
            for f in entries {
                let name = &f.path[f.path.rfind('/').unwrap() + 1..];
                let link = if f.mode.starts_with('l') { " -> /elsewhere" } else { "" };
                writeln!(
                    ls,
                    "{} {} {} u:object_r:{}:s0 {name}{link}",
                    f.mode, f.owner, f.group, f.label
                )
                .unwrap();
            }
            ls.push('\n');
        }
        let mut groups = String::new();
        for (u, gs) in &self.groups {
            if !gs.is_empty() {
                writeln!(groups, "{u} {}", gs.iter().cloned().collect::<Vec<_>>().join(" ")).unwrap();
            }
        }
        (ps, ls, groups)
    }

    fn in_group(&self, user: &str, group: &str) -> bool {
        match self.groups.get(user).filter(|g| !g.is_empty()) {
            Some(g) => g.contains(group),
            None => user == group,
        }
    }

    fn dac(&self, user: &str, f: &GenFile, bit: usize) -> bool {
        if user == "root" {
            return true;
        }
        let base = if f.owner == user {
            1
        } else if self.in_group(user, &f.group) {
            4
        } else {
            7
        };
        let c = f.mode.as_bytes()[base + bit] as char;
        match bit {
            0 => c == 'r',
            1 => c == 'w',
            _ => matches!(c, 'x' | 's' | 't'),
        }
    }

    fn class(mode: &str) -> &'static str {
        match mode.as_bytes()[0] {
            b'd' => "dir",
            b'c' => "chr_file",
            b'b' => "blk_file",
            b's' => "sock_file",
            b'p' => "fifo_file",
            b'l' => "lnk_file",
            _ => "file",
        }
    }

    /// Brute-force combined check; `kind` is 0 read, 1 write, 2 execute.
    pub fn can_access(&self, oracle: &Oracle<'_>, p: &GenProcess, path: &str, kind: usize) -> bool {
        let by_path: BTreeMap<&str, &GenFile> = self.files.iter().map(|f| (f.path.as_str(), f)).collect();
        let f = by_path[path];
        let mut prefix = String::new();
        let comps: Vec<&str> = path.split('/').filter(|c| !c.is_empty()).collect();
        let mut ancestors = vec!["/".to_string()];
        for c in comps.iter().take(comps.len().saturating_sub(1)) {
            prefix.push('/');
            prefix.push_str(c);
            ancestors.push(prefix.clone());
        }
        if path == "/" {
            ancestors.clear();
        }
        for a in &ancestors {
            let d = by_path[a.as_str()];
            if !self.dac(&p.user, d, 2) || !oracle.mac(&p.label, &d.label, "dir", &["search"]) {
                return false;
            }
        }
        let perms: &[&str] = match kind {
            0 => &["read", "open"],
            1 => &["write", "open"],
            _ => &["execute"],
        };
        self.dac(&p.user, f, kind) && oracle.mac(&p.label, &f.label, Self::class(&f.mode), perms)
    }
}

/// Large synthetic policy: `n_types` types, `n_rules` allow rules, a few
/// dozen attributes and some transitions and neverallows.
pub fn scale_policy_text(seed: u64, n_types: usize, n_rules: usize) -> String {
    let mut rng = rng(seed);
    let mut out = String::from(
        "class file { read write append getattr open execute execute_no_trans ioctl create unlink };\n\
         class dir { read write getattr search open add_name remove_name };\n\
         class process { transition fork sigchld };\n\
         class chr_file { read write open ioctl getattr };\n",
    );
    let n_attrs = 40;
    out.push_str("attribute domain;\n");
    for a in 0..n_attrs {
        writeln!(out, "attribute attr{a};").unwrap();
    }
    let n_domains = n_types / 5;
    let special = [
        "untrusted_app",
        "system_app",
        "platform_app",
        "proc_security",
        "unlabeled",
        "tee_exec",
    ];
    let mut names: Vec<String> = special.iter().map(|s| s.to_string()).collect();
    names.extend((special.len()..n_types).map(|i| format!("t{i}")));
    for (i, t) in names.iter().enumerate() {
        let mut decl = format!("type {t}");
        if i < n_domains || i < 3 {
            decl.push_str(", domain");
        }
        for _ in 0..rng.random_range(0..3) {
            write!(decl, ", attr{}", rng.random_range(0..n_attrs)).unwrap();
        }
        writeln!(out, "{decl};").unwrap();
    }
    let classes = [
        (
            "file",
            &[
                "read",
                "write",
                "append",
                "getattr",
                "open",
                "execute",
                "execute_no_trans",
            ][..],
        ),
        ("dir", &["read", "getattr", "search", "open", "add_name"][..]),
        ("chr_file", &["read", "write", "open", "ioctl"][..]),
        ("process", &["transition", "fork"][..]),
    ];
    for _ in 0..n_rules {
        let src = if rng.random_bool(0.15) {
            format!("attr{}", rng.random_range(0..n_attrs))
        } else {
            names[rng.random_range(0..n_domains.max(3))].clone()
        };
        let tgt = match rng.random_range(0..20) {
            0 => "self".to_string(),
            1..=3 => format!("attr{}", rng.random_range(0..n_attrs)),
            4 => format!(
                "{{ attr{} -{} }}",
                rng.random_range(0..n_attrs),
                names[rng.random_range(0..n_types)]
            ),
            _ => names[rng.random_range(0..n_types)].clone(),
        };
        let (class, perms) = classes[rng.random_range(0..classes.len())];
        let chosen: Vec<&str> = perms.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
        let perms = if chosen.is_empty() {
            perms[0].to_string()
        } else {
            format!("{{ {} }}", chosen.join(" "))
        };
        writeln!(out, "allow {src} {tgt}:{class} {perms};").unwrap();
    }
    for _ in 0..n_domains {
        let s = &names[rng.random_range(0..n_domains.max(3))];
        let o = &names[rng.random_range(0..n_types)];
        let r = &names[rng.random_range(0..n_domains.max(3))];
        writeln!(out, "type_transition {s} {o}:process {r};").unwrap();
    }
    out.push_str("neverallow { domain -untrusted_app } proc_security:file { write append };\n");
    out.push_str("neverallow untrusted_app unlabeled:dir *;\n");
    for i in 0..50 {
        writeln!(out, "neverallow attr{} t{}:chr_file write;", i % n_attrs, 100 + i).unwrap();
    }
    out
}
