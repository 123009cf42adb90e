//! Line-oriented text dump of an [`NgramModel`].
//!
//! ```text
//! orderinfo-ngram 1
//! order 3
//! unk_threshold 2
//! vocab 5
//! <unk>
//! ...
//! level 1 3 0.5 1 1.5
//! a	4
//! ...
//! ```
//!
//! Each `level` header carries the n-gram length, the number of entries and
//! the three discounts; entries are space-joined words, a tab, and the
//! adjusted count. Floats are written in shortest round-trip form so a
//! reloaded model scores identically.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::{LmError, NgramModel, TokenId};

const MAGIC: &str = "orderinfo-ngram";
const VERSION: u32 = 1;

pub fn save_model<W: Write>(model: &NgramModel, mut w: W) -> Result<(), LmError> {
    let words = model.vocab_words();
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "order {}", model.order())?;
    writeln!(w, "unk_threshold {}", model.unk_threshold())?;
    writeln!(w, "vocab {}", words.len())?;
    for word in words {
        writeln!(w, "{word}")?;
    }
    for (k, level) in model.sorted_levels().iter().enumerate() {
        let d = model.discounts(k + 1);
        writeln!(w, "level {} {} {:?} {:?} {:?}", k + 1, level.len(), d[0], d[1], d[2])?;
        for (gram, count) in level {
            let text: Vec<&str> = gram.iter().map(|&id| words[id as usize].as_str()).collect();
            writeln!(w, "{}\t{count}", text.join(" "))?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String, LmError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, message: impl Into<String>) -> LmError {
        LmError::Format { line: self.line, message: message.into() }
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, LmError> {
        let l = self.next()?;
        l.strip_prefix(key)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| self.err(format!("expected `{key} <value>`")))
    }
}

pub fn load_model<R: BufRead>(reader: R) -> Result<NgramModel, LmError> {
    let mut lines = Lines { inner: reader.lines(), line: 0 };
    let header = lines.next()?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(lines.err(format!("not a version {VERSION} n-gram model file")));
    }
    let order: usize = lines.keyed("order ")?;
    if !(1..=super::MAX_ORDER).contains(&order) {
        return Err(LmError::BadOrder(order));
    }
    let unk_threshold: u64 = lines.keyed("unk_threshold ")?;
    let vocab_len: usize = lines.keyed("vocab ")?;
    let mut words = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        words.push(lines.next()?);
    }
    if words.len() < 3 || words[0] != super::UNK || words[1] != super::BOS || words[2] != super::EOS {
        return Err(lines.err("vocabulary must start with <unk>, <s>, </s>"));
    }
    let index: HashMap<&str, TokenId> =
        words.iter().enumerate().map(|(i, w)| (w.as_str(), i as TokenId)).collect();

    let mut levels = Vec::with_capacity(order);
    for k in 1..=order {
        let head = lines.next()?;
        let parts: Vec<&str> = head.split(' ').collect();
        let parsed = match parts.as_slice() {
            ["level", n, len, d1, d2, d3] => (|| {
                Some((
                    n.parse::<usize>().ok()?,
                    len.parse::<usize>().ok()?,
                    [d1.parse().ok()?, d2.parse().ok()?, d3.parse().ok()?],
                ))
            })(),
            _ => None,
        };
        let Some((n, len, discounts)) = parsed.filter(|(n, _, _)| *n == k) else {
            return Err(lines.err(format!("expected header for level {k}")));
        };
        debug_assert_eq!(n, k);
        let mut counts = HashMap::with_capacity(len);
        for _ in 0..len {
            let l = lines.next()?;
            let (gram, count) = l.split_once('\t').ok_or_else(|| lines.err("missing tab"))?;
            let ids: Option<Vec<TokenId>> =
                gram.split(' ').map(|w| index.get(w).copied()).collect();
            let ids = ids
                .filter(|ids| ids.len() == k)
                .ok_or_else(|| lines.err(format!("bad {k}-gram `{gram}`")))?;
            let count: u64 = count.parse().map_err(|_| lines.err("bad count"))?;
            counts.insert(ids, count);
        }
        levels.push((counts, discounts));
    }
    Ok(NgramModel::from_parts(order, unk_threshold, words, levels))
}

#[cfg(test)]
mod tests {
    use super::super::TrainConfig;
    use super::*;

    #[test]
    fn round_trip_scores_identically() {
        let corpus: Vec<Vec<String>> = ["the cat sat", "the dog sat", "a cat ran", "the cat ran fast"]
            .iter()
            .map(|l| l.split(' ').map(String::from).collect())
            .collect();
        let m = NgramModel::train(&corpus, TrainConfig { order: 3, unk_threshold: 1, fixed_discounts: None }).unwrap();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        let back = load_model(&buf[..]).unwrap();
        assert_eq!(m, back);
        for s in [&["the", "cat", "sat"][..], &["dog", "the"], &["zebra"]] {
            assert_eq!(
                m.logp_sentence(s).unwrap().bits().to_bits(),
                back.logp_sentence(s).unwrap().bits().to_bits()
            );
        }
        // Serialization itself is deterministic.
        let mut again = Vec::new();
        save_model(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(load_model(&b"hello\n"[..]), Err(LmError::Format { line: 1, .. })));
        let truncated = b"orderinfo-ngram 1\norder 2\nunk_threshold 1\nvocab 3\n<unk>\n<s>\n</s>\n";
        assert!(load_model(&truncated[..]).is_err());
    }
}
