//! Vector storage and similarity queries.
//!
//! Text format: a `V dim` header line followed by one `word v1 ... vdim`
//! line per word. Binary format: the same header line, then per word the
//! UTF-8 word, a space, `dim` little-endian `f32`s and a newline.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::textprep::Stemmer;
use crate::trainer::EmbeddingModel;
use crate::vocab::Vocabulary;

/// Outcome of a lookup that may hit unknown words.
#[derive(Debug, Clone, PartialEq)]
pub enum Lookup<T> {
    Found(T),
    /// The words (after stemming) missing from the store.
    Oov(Vec<String>),
}

impl<T> Lookup<T> {
    pub fn found(self) -> Option<T> {
        match self {
            Lookup::Found(t) => Some(t),
            Lookup::Oov(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    words: Vec<String>,
    index: HashMap<String, usize>,
    counts: Option<Vec<u64>>,
    matrix: Vec<f32>,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreFormat {
    Text,
    Binary,
}

impl StoreFormat {
    /// `.bin` selects binary, anything else text.
    pub fn from_path(path: &Path) -> StoreFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => StoreFormat::Binary,
            _ => StoreFormat::Text,
        }
    }
}

pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Contract(format!(
            "cosine of vectors of dimension {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (mut uv, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

fn desc_then_word(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

impl VectorStore {
    pub fn new(words: Vec<String>, matrix: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 || matrix.len() != words.len() * dim {
            return Err(Error::Contract(format!(
                "{} values do not form {} rows of dimension {dim}",
                matrix.len(),
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Contract(format!("duplicate word {w:?}")));
            }
        }
        Ok(VectorStore {
            words,
            index,
            counts: None,
            matrix,
            dim,
        })
    }

    pub fn from_model(model: &EmbeddingModel) -> Self {
        let mut s = VectorStore::new(model.vocab.words().to_vec(), model.w_in.clone(), model.dim)
            .expect("model matrix matches its vocabulary");
        s.counts = Some(model.vocab.counts().to_vec());
        s
    }

    /// Attaches corpus counts (for frequency-floor evaluation). Words absent
    /// from `vocab` get count 0.
    pub fn with_counts(mut self, vocab: &Vocabulary) -> Self {
        self.counts = Some(
            self.words
                .iter()
                .map(|w| vocab.count_of(w).unwrap_or(0))
                .collect(),
        );
        self
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn count(&self, word: &str) -> Option<u64> {
        let counts = self.counts.as_ref()?;
        self.index_of(word).map(|i| counts[i])
    }

    pub fn has_counts(&self) -> bool {
        self.counts.is_some()
    }

    fn missing(&self, words: &[&str]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for w in words {
            if self.index_of(w).is_none() && !out.iter().any(|o| o == w) {
                out.push(w.to_string());
            }
        }
        out
    }

    /// Cosine of two words after stemming both.
    pub fn similarity(&self, w1: &str, w2: &str, stemmer: &dyn Stemmer) -> Result<Lookup<f64>> {
        let (a, b) = (stemmer.stem(w1), stemmer.stem(w2));
        let missing = self.missing(&[&a, &b]);
        if !missing.is_empty() {
            return Ok(Lookup::Oov(missing));
        }
        let (ia, ib) = (self.index[&a], self.index[&b]);
        Ok(Lookup::Found(cosine(self.row(ia), self.row(ib))?))
    }

    // Ranks every word except `exclude` by cosine to `query`.
    fn rank_by(&self, query: &[f32], exclude: &[usize], k: usize) -> Result<Vec<(String, f64)>> {
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::UndefinedSimilarity);
        }
        let mut scored: Vec<(String, f64)> = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            if exclude.contains(&i) {
                continue;
            }
            let row = self.row(i);
            let rn = norm(row);
            if rn == 0.0 {
                continue;
            }
            let d: f64 = row
                .iter()
                .zip(query)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            scored.push((self.words[i].clone(), (d / (rn * qn)).clamp(-1.0, 1.0)));
        }
        scored.sort_by(desc_then_word);
        scored.truncate(k);
        Ok(scored)
    }

    /// The `k` nearest words to `word` by cosine, descending, excluding the
    /// word itself. Ties are broken lexicographically.
    pub fn nearest(&self, word: &str, k: usize) -> Result<Lookup<Vec<(String, f64)>>> {
        let Some(i) = self.index_of(word) else {
            return Ok(Lookup::Oov(vec![word.to_string()]));
        };
        Ok(Lookup::Found(self.rank_by(self.row(i), &[i], k)?))
    }

    /// Words closest to `b - a + c` (on unit-normalized vectors), excluding
    /// `a`, `b` and `c`.
    pub fn analogy(
        &self,
        a: &str,
        b: &str,
        c: &str,
        k: usize,
    ) -> Result<Lookup<Vec<(String, f64)>>> {
        let missing = self.missing(&[a, b, c]);
        if !missing.is_empty() {
            return Ok(Lookup::Oov(missing));
        }
        let ids = [self.index[a], self.index[b], self.index[c]];
        let unit = |i: usize| -> Result<Vec<f64>> {
            let r = self.row(i);
            let n = norm(r);
            if n == 0.0 {
                return Err(Error::UndefinedSimilarity);
            }
            Ok(r.iter().map(|&x| x as f64 / n).collect())
        };
        let (va, vb, vc) = (unit(ids[0])?, unit(ids[1])?, unit(ids[2])?);
        let query: Vec<f32> = (0..self.dim)
            .map(|j| (vb[j] - va[j] + vc[j]) as f32)
            .collect();
        Ok(Lookup::Found(self.rank_by(&query, &ids, k)?))
    }

    pub fn save(&self, path: impl AsRef<Path>, format: StoreFormat) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w, format)
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W, format: StoreFormat) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            match format {
                StoreFormat::Text => {
                    w.write_all(word.as_bytes())?;
                    for x in self.row(i) {
                        // shortest representation that parses back to the same f32
                        write!(w, " {x}")?;
                    }
                    w.write_all(b"\n")?;
                }
                StoreFormat::Binary => {
                    w.write_all(word.as_bytes())?;
                    w.write_all(b" ")?;
                    for x in self.row(i) {
                        w.write_all(&x.to_le_bytes())?;
                    }
                    w.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, format: StoreFormat) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f), format, &path.display().to_string())
    }

    pub fn read_from<R: BufRead>(mut r: R, format: StoreFormat, origin: &str) -> Result<Self> {
        let ferr = |line: Option<usize>, m: String| Error::format(origin, line, m);
        let ioerr = |e: std::io::Error| Error::io(origin, e);
        let mut header = String::new();
        r.read_line(&mut header).map_err(ioerr)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (rows, dim) = match parts[..] {
            [a, b] => match (a.parse::<usize>(), b.parse::<usize>()) {
                (Ok(a), Ok(b)) if b > 0 => (a, b),
                _ => return Err(ferr(Some(1), format!("bad header {:?}", header.trim_end()))),
            },
            _ => {
                return Err(ferr(
                    Some(1),
                    format!("bad header {:?}, expected \"V dim\"", header.trim_end()),
                ))
            }
        };
        let mut words = Vec::with_capacity(rows);
        let mut matrix = Vec::with_capacity(rows * dim);
        match format {
            StoreFormat::Text => {
                for (n, line) in r.lines().enumerate() {
                    let line = line.map_err(ioerr)?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let lineno = Some(n + 2);
                    if words.len() == rows {
                        return Err(ferr(
                            lineno,
                            format!("more than the {rows} rows declared in the header"),
                        ));
                    }
                    let mut it = line.split(' ').filter(|s| !s.is_empty());
                    let word = it.next().ok_or_else(|| ferr(lineno, "empty row".into()))?;
                    let before = matrix.len();
                    for tok in it {
                        let x: f32 = tok
                            .parse()
                            .map_err(|_| ferr(lineno, format!("bad value {tok:?}")))?;
                        matrix.push(x);
                    }
                    if matrix.len() - before != dim {
                        return Err(ferr(
                            lineno,
                            format!("expected {dim} values, found {}", matrix.len() - before),
                        ));
                    }
                    words.push(word.to_string());
                }
            }
            StoreFormat::Binary => {
                let mut buf = vec![0u8; dim * 4];
                for n in 0..rows {
                    let mut word = Vec::new();
                    r.read_until(b' ', &mut word).map_err(ioerr)?;
                    if word.last() != Some(&b' ') {
                        return Err(ferr(
                            None,
                            format!("truncated at row {}; header declares {rows}", n + 1),
                        ));
                    }
                    word.pop();
                    while word.first() == Some(&b'\n') {
                        word.remove(0);
                    }
                    let word = String::from_utf8(word)
                        .map_err(|_| ferr(None, format!("row {} word is not UTF-8", n + 1)))?;
                    r.read_exact(&mut buf)
                        .map_err(|_| ferr(None, format!("truncated vector at row {}", n + 1)))?;
                    matrix.extend(
                        buf.chunks_exact(4)
                            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
                    );
                    words.push(word);
                }
                let mut rest = Vec::new();
                r.read_to_end(&mut rest).map_err(ioerr)?;
                if rest.iter().any(|b| !b.is_ascii_whitespace()) {
                    return Err(ferr(
                        None,
                        format!("trailing data after the {rows} rows declared in the header"),
                    ));
                }
            }
        }
        if words.len() != rows {
            return Err(ferr(
                None,
                format!("header declares {rows} rows, found {}", words.len()),
            ));
        }
        VectorStore::new(words, matrix, dim).map_err(|e| ferr(None, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::IdentityStemmer;

    fn store() -> VectorStore {
        let words = ["a", "b", "c", "d"].map(String::from).to_vec();
        let m = vec![1.0, 0.0, 0.9, 0.1, 0.0, 1.0, -1.0, 0.2];
        VectorStore::new(words, m, 2).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3f32, -2.0, 5.5];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 32 / sqrt(14 * 77)
        let expected = 32.0 / (14.0f64 * 77.0).sqrt();
        assert!((cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.974631846).abs() < 1e-9);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedSimilarity)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cosine_scale_invariant() {
        let u = [0.5f32, -1.5, 2.0];
        let v = [1.0f32, 1.0, -0.25];
        let su: Vec<f32> = u.iter().map(|x| x * 4.0).collect();
        assert!((cosine(&su, &v).unwrap() - cosine(&u, &v).unwrap()).abs() < 1e-12);
        assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
    }

    #[test]
    fn similarity_and_oov() {
        let s = store();
        assert!(
            (s.similarity("a", "a", &IdentityStemmer)
                .unwrap()
                .found()
                .unwrap()
                - 1.0)
                .abs()
                < 1e-12
        );
        assert_eq!(
            s.similarity("йель", "a", &IdentityStemmer).unwrap(),
            Lookup::Oov(vec!["йель".into()])
        );
        assert_eq!(
            s.similarity("x", "y", &IdentityStemmer).unwrap(),
            Lookup::Oov(vec!["x".into(), "y".into()])
        );
    }

    #[test]
    fn nearest_all_others_sorted() {
        let s = store();
        let n = s.nearest("a", 3).unwrap().found().unwrap();
        let words: Vec<&str> = n.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, vec!["b", "c", "d"]);
        assert!(n.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(s.nearest("a", 10).unwrap().found().unwrap().len(), 3);
        assert!(matches!(s.nearest("zz", 1).unwrap(), Lookup::Oov(_)));
    }

    #[test]
    fn nearest_ties_lexicographic() {
        let words = ["q", "z", "y", "x"].map(String::from).to_vec();
        let m = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let s = VectorStore::new(words, m, 2).unwrap();
        let n = s.nearest("q", 3).unwrap().found().unwrap();
        let words: Vec<&str> = n.iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, vec!["x", "y", "z"]);
    }

    #[test]
    fn analogy_cancellation() {
        let s = store();
        let an = s.analogy("a", "a", "c", 10).unwrap().found().unwrap();
        let near: Vec<_> = s
            .nearest("c", 10)
            .unwrap()
            .found()
            .unwrap()
            .into_iter()
            .filter(|(w, _)| w != "a")
            .collect();
        let an_words: Vec<_> = an.iter().map(|(w, _)| w.clone()).collect();
        let near_words: Vec<_> = near.iter().map(|(w, _)| w.clone()).collect();
        assert_eq!(an_words, near_words);
        assert!(an.iter().all(|(w, _)| w != "a" && w != "c"));
        assert_eq!(
            s.analogy("a", "q", "c", 1).unwrap(),
            Lookup::Oov(vec!["q".into()])
        );
    }

    #[test]
    fn text_and_binary_roundtrip() {
        let s = store();
        for fmt in [StoreFormat::Text, StoreFormat::Binary] {
            let mut buf = Vec::new();
            s.write_to(&mut buf, fmt).unwrap();
            let back = VectorStore::read_from(&buf[..], fmt, "mem").unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn row_count_mismatch() {
        let text = "2 4\na 1 2 3 4\nb 1 2 3 4\nc 1 2 3 4\n";
        assert!(matches!(
            VectorStore::read_from(text.as_bytes(), StoreFormat::Text, "t"),
            Err(Error::Format { .. })
        ));
        let short = "3 2\na 1 2\n";
        assert!(VectorStore::read_from(short.as_bytes(), StoreFormat::Text, "t").is_err());
        let bad_dim = "1 2\na 1 2 3\n";
        assert!(VectorStore::read_from(bad_dim.as_bytes(), StoreFormat::Text, "t").is_err());
        assert!(VectorStore::read_from("hello\n".as_bytes(), StoreFormat::Text, "t").is_err());
        let mut bin = Vec::new();
        store().write_to(&mut bin, StoreFormat::Binary).unwrap();
        bin.truncate(bin.len() - 5);
        assert!(VectorStore::read_from(&bin[..], StoreFormat::Binary, "b").is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            StoreFormat::from_path(Path::new("m.bin")),
            StoreFormat::Binary
        );
        assert_eq!(
            StoreFormat::from_path(Path::new("m.vec")),
            StoreFormat::Text
        );
    }
}
