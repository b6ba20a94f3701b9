//! Synthetic source-like corpus with controlled cross-file redundancy.
//!
//! Files are grouped into families sharing an extension and basename (the
//! same file at different revisions, forks, vendored copies...). Each family
//! owns a template of lines; a member file is a window of the template in
//! which every line is kept with probability `overlap` and otherwise replaced
//! by a freshly generated line. Keys of a family sort together, so the
//! redundancy is only visible to a block compressor when the key order
//! groups them. Everything is a pure function of the seed and file index.

use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution as _, LogNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use xxhash_rust::xxh3::xxh3_128_with_seed;

use crate::corpus::{write_record, CorpusRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub files: usize,
    /// Approximate total content size.
    pub target_bytes: u64,
    /// Probability that a line of a file comes from its family template.
    pub overlap: f64,
    pub files_per_family: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(files: usize, target_bytes: u64, seed: u64) -> Self {
        Self {
            files,
            target_bytes,
            overlap: 0.7,
            files_per_family: 40,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap {} outside [0, 1]", self.overlap)));
        }
        if self.files_per_family == 0 {
            return Err(Error::Config("files_per_family must be >= 1".into()));
        }
        if self.files > 0 && self.target_bytes < self.files as u64 {
            return Err(Error::Config("target size below one byte per file".into()));
        }
        Ok(())
    }

    fn mean_size(&self) -> f64 {
        self.target_bytes as f64 / self.files.max(1) as f64
    }
}

struct Lang {
    ext: &'static str,
    comment: &'static str,
    keywords: &'static [&'static str],
    open: &'static str,
    close: &'static str,
    term: &'static str,
    lang: &'static str,
    weight: u32,
}

const LANGS: &[Lang] = &[
    Lang {
        ext: "py",
        comment: "#",
        keywords: &[
            "def", "return", "import", "from", "class", "if", "elif", "else", "for", "while", "with", "try", "except",
            "raise", "yield", "lambda", "None", "True", "False", "self",
        ],
        open: ":",
        close: "",
        term: "",
        lang: "Python",
        weight: 14,
    },
    Lang {
        ext: "c",
        comment: "//",
        keywords: &[
            "int", "char", "void", "static", "const", "struct", "return", "if", "else", "for", "while", "sizeof",
            "unsigned", "size_t", "NULL", "break", "switch", "case",
        ],
        open: " {",
        close: "}",
        term: ";",
        lang: "C",
        weight: 10,
    },
    Lang {
        ext: "h",
        comment: "/*",
        keywords: &[
            "#define", "#include", "#ifndef", "#endif", "typedef", "struct", "extern", "int", "const", "char", "void",
            "unsigned",
        ],
        open: " {",
        close: "};",
        term: ";",
        lang: "C",
        weight: 6,
    },
    Lang {
        ext: "js",
        comment: "//",
        keywords: &[
            "function",
            "const",
            "let",
            "var",
            "return",
            "if",
            "else",
            "for",
            "of",
            "new",
            "this",
            "await",
            "async",
            "export",
            "import",
            "require",
            "null",
            "undefined",
        ],
        open: " {",
        close: "}",
        term: ";",
        lang: "JavaScript",
        weight: 12,
    },
    Lang {
        ext: "java",
        comment: "//",
        keywords: &[
            "public", "private", "static", "final", "class", "void", "int", "String", "return", "new", "if", "else",
            "for", "import", "package", "this", "throws", "extends",
        ],
        open: " {",
        close: "}",
        term: ";",
        lang: "Java",
        weight: 9,
    },
    Lang {
        ext: "go",
        comment: "//",
        keywords: &[
            "func", "return", "if", "else", "for", "range", "var", "type", "struct", "package", "import", "err", "nil",
            "defer", "go", "chan", "map", "string",
        ],
        open: " {",
        close: "}",
        term: "",
        lang: "Go",
        weight: 6,
    },
    Lang {
        ext: "rs",
        comment: "//",
        keywords: &[
            "fn", "let", "mut", "pub", "impl", "struct", "enum", "match", "return", "use", "mod", "self", "Self",
            "Some", "None", "Ok", "Err", "where",
        ],
        open: " {",
        close: "}",
        term: ";",
        lang: "Rust",
        weight: 5,
    },
    Lang {
        ext: "cpp",
        comment: "//",
        keywords: &[
            "template",
            "typename",
            "class",
            "public",
            "private",
            "const",
            "auto",
            "return",
            "std::vector",
            "std::string",
            "namespace",
            "virtual",
            "override",
            "if",
            "for",
        ],
        open: " {",
        close: "}",
        term: ";",
        lang: "C++",
        weight: 6,
    },
    Lang {
        ext: "md",
        comment: "<!--",
        keywords: &["#", "##", "-", "*", "1.", ">", "```", "|"],
        open: "",
        close: "",
        term: "",
        lang: "Markdown",
        weight: 6,
    },
    Lang {
        ext: "json",
        comment: "",
        keywords: &[
            "\"name\":",
            "\"version\":",
            "\"id\":",
            "\"type\":",
            "\"value\":",
            "\"items\":",
            "\"enabled\":",
            "\"description\":",
        ],
        open: " {",
        close: "},",
        term: ",",
        lang: "JSON",
        weight: 5,
    },
    Lang {
        ext: "html",
        comment: "<!--",
        keywords: &[
            "<div", "<span", "<a", "<p>", "<li>", "<ul>", "<script", "<link", "<meta", "<table", "<tr>", "<td>",
        ],
        open: ">",
        close: "</div>",
        term: "",
        lang: "HTML",
        weight: 5,
    },
    Lang {
        ext: "sh",
        comment: "#",
        keywords: &[
            "if", "then", "fi", "for", "do", "done", "echo", "export", "local", "case", "esac", "exit", "set", "test",
        ],
        open: "",
        close: "",
        term: "",
        lang: "Shell",
        weight: 4,
    },
    Lang {
        ext: "txt",
        comment: "",
        keywords: &["the", "and", "of", "to", "in", "is", "for", "with", "on", "as"],
        open: "",
        close: "",
        term: ".",
        lang: "Text",
        weight: 4,
    },
    Lang {
        ext: "",
        comment: "#",
        keywords: &[
            "all:", "install:", "clean:", "CFLAGS", "LDFLAGS", "$(CC)", "-o", "-c", "rm", "-f", ".PHONY:",
        ],
        open: "",
        close: "",
        term: "",
        lang: "Makefile",
        weight: 2,
    },
];

const WORDS: &[&str] = &[
    "user", "handler", "config", "buffer", "index", "node", "list", "item", "value", "key", "result", "error",
    "request", "response", "client", "server", "session", "token", "cache", "entry", "table", "row", "column", "file",
    "path", "name", "size", "count", "offset", "length", "data", "block", "stream", "reader", "writer", "parser",
    "lexer", "token", "state", "event", "queue", "task", "worker", "thread", "lock", "mutex", "pool", "manager",
    "service", "factory", "builder", "context", "options", "settings", "params", "args", "input", "output", "format",
    "encode", "decode", "load", "save", "open", "close", "read", "write", "init", "reset", "update", "delete",
    "create", "insert", "remove", "find", "search", "sort", "merge", "split", "join", "map", "filter", "reduce",
    "apply", "check", "validate", "parse", "render", "draw", "view", "model", "store", "record", "field", "schema",
    "query", "filter", "limit", "page", "image", "color", "width", "height", "font", "text", "label", "button",
    "window", "frame", "layout", "widget", "style", "theme", "log", "debug", "trace", "util", "helper", "common",
    "core", "base", "main", "test", "mock", "spec", "bench", "net", "http", "socket", "address", "port", "host", "url",
    "route", "api", "auth", "user", "account", "order", "price", "product", "cart", "payment", "invoice", "report",
    "chart", "graph", "tree", "heap", "stack", "vector", "matrix", "point", "line", "shape", "rect", "circle", "time",
    "date", "clock", "timer", "delay", "retry", "timeout",
];

/// 40 hex digits like a real content hash; the index suffix keeps them unique.
fn content_id(seed: u64, index: usize) -> String {
    let h = xxh3_128_with_seed(&(index as u64).to_le_bytes(), seed);
    format!("swh:1:cnt:{h:032x}{:08x}", index as u32)
}

fn rng_for(seed: u64, stream: u64, index: u64) -> Xoshiro256PlusPlus {
    let mix = xxh3_128_with_seed(&[stream.to_le_bytes(), index.to_le_bytes()].concat(), seed);
    Xoshiro256PlusPlus::seed_from_u64(mix as u64)
}

fn ident(rng: &mut impl Rng, camel: bool) -> String {
    let n = rng.random_range(1..=3);
    let mut s = String::new();
    for i in 0..n {
        let w = *WORDS.choose(rng).expect("non-empty");
        if i == 0 {
            s.push_str(w);
        } else if camel {
            let mut c = w.chars();
            let first = c.next().expect("non-empty word");
            s.extend(first.to_uppercase());
            s.push_str(c.as_str());
        } else {
            s.push('_');
            s.push_str(w);
        }
    }
    s
}

fn line(lang: &Lang, rng: &mut impl Rng) -> String {
    let camel = matches!(lang.ext, "js" | "java" | "go" | "cpp");
    let indent = " ".repeat(4 * rng.random_range(0..4));
    let kw = *lang.keywords.choose(rng).expect("non-empty");
    match rng.random_range(0..8) {
        0 if !lang.comment.is_empty() => {
            let words: Vec<&str> = (0..rng.random_range(3..10))
                .map(|_| *WORDS.choose(rng).expect("non-empty"))
                .collect();
            format!("{indent}{} {}", lang.comment, words.join(" "))
        }
        1 => format!(
            "{indent}{kw} {}({}, {}){}",
            ident(rng, camel),
            ident(rng, camel),
            ident(rng, camel),
            lang.open
        ),
        2 => format!(
            "{indent}{} = {}.{}({}){}",
            ident(rng, camel),
            ident(rng, camel),
            ident(rng, camel),
            rng.random_range(0..1000),
            lang.term
        ),
        3 => format!("{indent}{kw} {} {}", ident(rng, camel), lang.term),
        4 if !lang.close.is_empty() => format!("{indent}{}", lang.close),
        5 => format!(
            "{indent}{kw} \"{} {}\"{}",
            ident(rng, false),
            rng.random_range(0..100),
            lang.term
        ),
        6 => String::new(),
        _ => format!(
            "{indent}{}[{}] = {} + {}{}",
            ident(rng, camel),
            rng.random_range(0..64),
            ident(rng, camel),
            rng.random_range(0..4096),
            lang.term
        ),
    }
}

struct Family {
    lang: &'static Lang,
    basename: String,
    template: Vec<String>,
}

impl Family {
    fn file_name(&self) -> String {
        if self.lang.ext.is_empty() {
            self.basename.clone()
        } else {
            format!("{}.{}", self.basename, self.lang.ext)
        }
    }
}

/// A corpus description; records are generated on demand.
pub struct SynthCorpus {
    spec: SynthSpec,
    families: Vec<Family>,
    sizes: LogNormal<f64>,
}

const SIZE_SIGMA: f64 = 1.0;

impl SynthCorpus {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mean = spec.mean_size().max(1.0);
        let sizes = LogNormal::new(mean.ln() - SIZE_SIGMA * SIZE_SIGMA / 2.0, SIZE_SIGMA)
            .map_err(|e| Error::Config(format!("size distribution: {e}")))?;
        let n_families = spec.files.div_ceil(spec.files_per_family).max(1);
        let total_weight: u32 = LANGS.iter().map(|l| l.weight).sum();
        // ~40 bytes per generated line
        let template_lines = ((mean / 40.0).ceil() as usize).max(16);
        let families = (0..n_families)
            .map(|f| {
                let mut rng = rng_for(spec.seed, 1, f as u64);
                let mut pick = rng.random_range(0..total_weight);
                let lang = LANGS
                    .iter()
                    .find(|l| {
                        if pick < l.weight {
                            true
                        } else {
                            pick -= l.weight;
                            false
                        }
                    })
                    .expect("weights cover the range");
                let basename = if lang.ext.is_empty() {
                    format!("Makefile{f}")
                } else {
                    format!("{}{f}", ident(&mut rng, false))
                };
                let template = (0..template_lines).map(|_| line(lang, &mut rng)).collect();
                Family {
                    lang,
                    basename,
                    template,
                }
            })
            .collect();
        Ok(Self { spec, families, sizes })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.spec.files
    }

    pub fn is_empty(&self) -> bool {
        self.spec.files == 0
    }

    /// File `index`, independent of generation order.
    pub fn record(&self, index: usize) -> CorpusRecord {
        let fam = &self.families[index % self.families.len()];
        let mut rng = rng_for(self.spec.seed, 2, index as u64);
        let max = (self.spec.mean_size() * 64.0).max(64.0);
        let size = self.sizes.sample(&mut rng).clamp(16.0, max) as usize;
        let mut content = String::with_capacity(size + 128);
        let mut pos = rng.random_range(0..fam.template.len());
        while content.len() < size {
            if rng.random_bool(self.spec.overlap) {
                content.push_str(&fam.template[pos]);
            } else {
                content.push_str(&line(fam.lang, &mut rng));
            }
            content.push('\n');
            pos = (pos + 1) % fam.template.len();
        }
        let mut names = vec![(fam.file_name(), rng.random_range(2..50u64))];
        if rng.random_bool(0.2) {
            names.push((format!("{}_{}", ident(&mut rng, false), fam.file_name()), 1));
        }
        CorpusRecord {
            content_id: content_id(self.spec.seed, index),
            filename_candidates: names,
            content: content.into_bytes(),
            language: Some(fam.lang.lang.to_string()),
        }
    }

    /// Shuffled emission order, so the corpus is not already key-sorted.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.spec.files).collect();
        let mut rng = rng_for(self.spec.seed, 3, 0);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        order
    }

    pub fn records(&self) -> impl Iterator<Item = CorpusRecord> + '_ {
        self.order().into_iter().map(|i| self.record(i))
    }

    /// Writes the corpus as JSONL; returns (files, content bytes).
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(u64, u64)> {
        let mut bytes = 0u64;
        let mut files = 0u64;
        for rec in self.records() {
            bytes += rec.content.len() as u64;
            files += 1;
            write_record(&mut out, &rec)?;
        }
        out.flush().map_err(|e| Error::io("writing corpus", e))?;
        Ok((files, bytes))
    }
}
