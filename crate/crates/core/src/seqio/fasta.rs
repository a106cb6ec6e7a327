use std::io::{BufRead, Write};

use super::labels::is_valid_residue;
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastaRecord {
    /// First whitespace-delimited token of the header.
    pub id: String,
    /// Remainder of the header line, if any.
    pub description: String,
    pub sequence: String,
}

/// Streaming multi-line FASTA reader; holds one record at a time.
pub struct FastaReader<R> {
    reader: R,
    pending_header: Option<String>,
    line: String,
    line_no: usize,
    done: bool,
}

impl<R: BufRead> FastaReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            pending_header: None,
            line: String::new(),
            line_no: 0,
            done: false,
        }
    }

    fn read_line(&mut self) -> Result<bool, ParseError> {
        self.line.clear();
        let n = self.reader.read_line(&mut self.line)?;
        if n > 0 {
            self.line_no += 1;
        }
        Ok(n > 0)
    }

    fn finish(header: &str, seq: String) -> Result<FastaRecord, ParseError> {
        let mut parts = header.splitn(2, char::is_whitespace);
        let id = parts.next().unwrap_or_default().to_string();
        let description = parts.next().unwrap_or_default().trim().to_string();
        if seq.is_empty() {
            return Err(ParseError::EmptySequence { id });
        }
        if let Some(ch) = seq.bytes().find(|&b| !is_valid_residue(b)) {
            return Err(ParseError::IllegalCharacter { id, ch: ch as char });
        }
        Ok(FastaRecord {
            id,
            description,
            sequence: seq,
        })
    }

    fn next_record(&mut self) -> Result<Option<FastaRecord>, ParseError> {
        let header = match self.pending_header.take() {
            Some(h) => h,
            None => loop {
                if !self.read_line()? {
                    self.done = true;
                    return Ok(None);
                }
                let l = self.line.trim();
                if l.is_empty() {
                    continue;
                }
                match l.strip_prefix('>') {
                    Some(h) => break h.to_string(),
                    None => {
                        return Err(ParseError::MalformedHeader {
                            line: self.line_no,
                            detail: "sequence data before the first '>' header".into(),
                        })
                    }
                }
            },
        };
        let mut seq = String::new();
        loop {
            if !self.read_line()? {
                self.done = true;
                break;
            }
            let l = self.line.trim();
            if let Some(h) = l.strip_prefix('>') {
                self.pending_header = Some(h.to_string());
                break;
            }
            seq.extend(l.chars().filter(|c| !c.is_whitespace()).map(|c| c.to_ascii_uppercase()));
        }
        Self::finish(&header, seq).map(Some)
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<FastaRecord, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done && self.pending_header.is_none() {
            return None;
        }
        self.next_record().transpose()
    }
}

/// Reads every record; `(id, sequence)` pairs in file order.
pub fn parse_plain_fasta<R: BufRead>(reader: R) -> Result<Vec<(String, String)>, ParseError> {
    FastaReader::new(reader)
        .map(|r| r.map(|rec| (rec.id, rec.sequence)))
        .collect()
}

pub fn write_fasta_record<W: Write>(mut w: W, header: &str, sequence: &str) -> std::io::Result<()> {
    writeln!(w, ">{header}")?;
    for chunk in sequence.as_bytes().chunks(60) {
        w.write_all(chunk)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse_plain_fasta(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn wrapped_lines_are_joined_and_uppercased() {
        let text = ">a first\nMKV\nlla\n>b\nAC\nDE\n";
        let recs = parse_plain_fasta(text.as_bytes()).unwrap();
        assert_eq!(recs, vec![("a".into(), "MKVLLA".into()), ("b".into(), "ACDE".into())]);
    }

    #[test]
    fn illegal_and_empty_sequences_fail() {
        assert!(matches!(
            parse_plain_fasta(&b">a\nMKJ\n"[..]).unwrap_err(),
            ParseError::IllegalCharacter { ch: 'J', .. }
        ));
        assert!(matches!(
            parse_plain_fasta(&b">a\n>b\nMK\n"[..]).unwrap_err(),
            ParseError::EmptySequence { .. }
        ));
    }

    #[test]
    fn streaming_reader_recovers_after_bad_record() {
        let recs: Vec<_> = FastaReader::new(&b">a\nMJ\n>b\nMK\n"[..]).collect();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].is_err());
        assert_eq!(recs[1].as_ref().unwrap().sequence, "MK");
    }

    #[test]
    fn writer_wraps_at_sixty() {
        let mut out = Vec::new();
        write_fasta_record(&mut out, "x", &"A".repeat(61)).unwrap();
        let text = String::from_utf8(out).unwrap();
        let recs = parse_plain_fasta(text.as_bytes()).unwrap();
        assert_eq!(recs[0].1.len(), 61);
        assert_eq!(text.lines().count(), 3);
    }
}
