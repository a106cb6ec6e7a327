//! Three-line annotated records:
//!
//! ```text
//! >P1|EUKARYA|SEC_SPI|0
//! MKWVTFISLLFLFSSAYSRG
//! SSSSSSSSSSSSSSSSSSII
//! ```

use std::io::{BufRead, Write};

use super::labels::{is_valid_residue, OrganismGroup, RegionLabel, SpType};
use super::ParseError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatedRecord {
    pub id: String,
    pub group: OrganismGroup,
    pub sp_type: SpType,
    pub partition: u32,
    pub sequence: String,
    pub annotation: Vec<RegionLabel>,
    /// 1-based index of the last signal residue.
    pub cs_position: Option<usize>,
}

/// Length of the contiguous signal block starting at residue 1.
pub fn signal_block_len(annotation: &[RegionLabel]) -> usize {
    annotation.iter().take_while(|l| l.in_signal_block()).count()
}

impl AnnotatedRecord {
    /// Validates the sequence/annotation pair against the declared type and
    /// derives the cleavage site.
    pub fn new(
        id: impl Into<String>,
        group: OrganismGroup,
        sp_type: SpType,
        partition: u32,
        sequence: impl Into<String>,
        annotation: Vec<RegionLabel>,
    ) -> Result<Self, ParseError> {
        let id = id.into();
        let sequence = sequence.into();
        if sequence.is_empty() {
            return Err(ParseError::EmptySequence { id });
        }
        if let Some(ch) = sequence.bytes().find(|&b| !is_valid_residue(b)) {
            return Err(ParseError::IllegalCharacter { id, ch: ch as char });
        }
        if annotation.len() != sequence.len() {
            return Err(ParseError::LengthMismatch {
                id,
                sequence: sequence.len(),
                annotation: annotation.len(),
            });
        }
        if annotation.contains(&RegionLabel::Pad) {
            return Err(ParseError::InconsistentType {
                id,
                detail: "PAD inside the sequence".into(),
            });
        }
        let block = signal_block_len(&annotation);
        let inconsistent = |detail: String| ParseError::InconsistentType { id: id.clone(), detail };
        if annotation[block..].iter().any(|l| l.in_signal_block()) {
            return Err(inconsistent("signal tags outside the N-terminal block".into()));
        }
        let cleavages = annotation[..block]
            .iter()
            .filter(|&&l| l == RegionLabel::Cleavage)
            .count();
        if cleavages > 1 || (cleavages == 1 && annotation[block - 1] != RegionLabel::Cleavage) {
            return Err(inconsistent("cleavage tag must close the signal block, once".into()));
        }
        if cleavages == 1 && block == 1 {
            return Err(inconsistent("cleavage tag without a preceding signal tag".into()));
        }
        let tagged: Option<SpType> = annotation[..block].iter().find_map(|l| l.sp_type());
        if annotation[..block]
            .iter()
            .filter_map(|l| l.sp_type())
            .any(|t| Some(t) != tagged)
        {
            return Err(inconsistent("mixed signal tags".into()));
        }
        match (sp_type, tagged) {
            (SpType::NoSp, None) if block == 0 => {}
            (t, Some(a)) if t == a => {}
            (t, a) => {
                return Err(inconsistent(format!(
                    "header says {t}, annotation says {}",
                    a.map_or("NO_SP", SpType::name)
                )))
            }
        }
        let cs_position = (block > 0).then_some(block);
        Ok(Self {
            id,
            group,
            sp_type,
            partition,
            sequence,
            annotation,
            cs_position,
        })
    }

    pub fn header(&self) -> String {
        format!(">{}|{}|{}|{}", self.id, self.group, self.sp_type, self.partition)
    }

    pub fn annotation_string(&self) -> String {
        self.annotation.iter().filter_map(|l| l.to_char()).collect()
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(String, OrganismGroup, SpType, u32), ParseError> {
    let malformed = |detail: &str| ParseError::MalformedHeader {
        line: line_no,
        detail: detail.to_string(),
    };
    let body = line.strip_prefix('>').ok_or_else(|| malformed("missing '>'"))?;
    let fields: Vec<&str> = body.split('|').collect();
    if fields.len() != 4 {
        return Err(malformed("expected id|GROUP|TYPE|partition"));
    }
    if fields[0].is_empty() {
        return Err(malformed("empty id"));
    }
    let group = fields[1].parse().map_err(|e: String| malformed(&e))?;
    let sp_type = fields[2].parse().map_err(|e: String| malformed(&e))?;
    let partition = fields[3]
        .parse()
        .map_err(|_| malformed("partition is not a non-negative integer"))?;
    Ok((fields[0].to_string(), group, sp_type, partition))
}

/// Streaming reader over annotated records.
pub struct AnnotatedReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> AnnotatedReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
        }
    }

    fn next_line(&mut self) -> Option<Result<String, ParseError>> {
        let line = self.lines.next()?;
        self.line_no += 1;
        Some(
            line.map(|l| l.trim_end_matches(['\r', '\n']).to_string())
                .map_err(ParseError::from),
        )
    }

    fn read_record(&mut self, header: String) -> Result<AnnotatedRecord, ParseError> {
        let header_line = self.line_no;
        let (id, group, sp_type, partition) = parse_header(&header, header_line)?;
        let truncated = || ParseError::MalformedHeader {
            line: header_line,
            detail: "record truncated before its annotation line".into(),
        };
        let sequence = self.next_line().ok_or_else(truncated)??;
        let ann_line = self.next_line().ok_or_else(truncated)??;
        let ann_line_no = self.line_no;
        let annotation = ann_line
            .chars()
            .map(|c| {
                RegionLabel::from_char(c).ok_or(ParseError::UnknownAnnotationChar {
                    id: id.clone(),
                    line: ann_line_no,
                    ch: c,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        AnnotatedRecord::new(id, group, sp_type, partition, sequence, annotation)
    }
}

impl<R: BufRead> Iterator for AnnotatedReader<R> {
    type Item = Result<AnnotatedRecord, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.next_line()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.read_record(line));
        }
    }
}

pub fn parse_annotated_fasta<R: BufRead>(reader: R) -> Result<Vec<AnnotatedRecord>, ParseError> {
    AnnotatedReader::new(reader).collect()
}

pub fn write_annotated_fasta<W: Write>(mut w: W, records: &[AnnotatedRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{}", r.header())?;
        writeln!(w, "{}", r.sequence)?;
        writeln!(w, "{}", r.annotation_string())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<AnnotatedRecord>, ParseError> {
        parse_annotated_fasta(text.as_bytes())
    }

    #[test]
    fn cleavage_site_is_end_of_signal_block() {
        let recs = parse(">P1|EUKARYA|SEC_SPI|0\nMKWVTFISLLFLFSSAYSRG\nSSSSSSSSSSSSSSSSSSII\n").unwrap();
        assert_eq!(recs[0].cs_position, Some(18));
        assert_eq!(recs[0].group, OrganismGroup::Eukarya);
    }

    #[test]
    fn no_sp_has_no_cleavage_site() {
        let recs = parse(">Q9|ARCHAEA|NO_SP|2\nMKKLL\nIIIII\n").unwrap();
        assert_eq!(recs[0].cs_position, None);
    }

    #[test]
    fn cleavage_tag_counts_as_last_signal_residue() {
        let recs = parse(">A|GRAM_NEGATIVE|TAT_SPI|1\nMRRLLAAG\nTTTTTCOO\n").unwrap();
        assert_eq!(recs[0].cs_position, Some(6));
    }

    #[test]
    fn short_annotation_is_length_mismatch() {
        let err = parse(">P1|EUKARYA|SEC_SPI|0\nMKWVT\nSSSS\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::LengthMismatch {
                sequence: 5,
                annotation: 4,
                ..
            }
        ));
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(
            parse(">P1|EUKARYA|SEC_SPI\nMK\nSS\n").unwrap_err(),
            ParseError::MalformedHeader { .. }
        ));
        assert!(matches!(
            parse(">P1|PLANT|SEC_SPI|0\nMK\nSS\n").unwrap_err(),
            ParseError::MalformedHeader { .. }
        ));
        assert!(matches!(
            parse(">P1|EUKARYA|SEC_SPI|0\nMK\nSQ\n").unwrap_err(),
            ParseError::UnknownAnnotationChar { ch: 'Q', .. }
        ));
        assert!(matches!(
            parse(">P1|EUKARYA|SEC_SPII|0\nMKA\nSSI\n").unwrap_err(),
            ParseError::InconsistentType { .. }
        ));
        assert!(matches!(
            parse(">P1|EUKARYA|NO_SP|0\nMKA\nSSI\n").unwrap_err(),
            ParseError::InconsistentType { .. }
        ));
        assert!(matches!(
            parse(">P1|EUKARYA|SEC_SPI|0\nMKA\nISS\n").unwrap_err(),
            ParseError::InconsistentType { .. }
        ));
        assert!(matches!(
            parse(">P1|EUKARYA|SEC_SPI|0\nMKAA\nSCSI\n").unwrap_err(),
            ParseError::InconsistentType { .. }
        ));
        assert!(matches!(
            parse(">P1|EUKARYA|SEC_SPI|0\nMK\n").unwrap_err(),
            ParseError::MalformedHeader { .. }
        ));
    }

    #[test]
    fn tolerates_crlf_and_blank_separators() {
        let recs = parse(">a|UNKNOWN|NO_SP|0\r\nMK\r\nGG\r\n\r\n>b|EUKARYA|NO_SP|0\r\nMA\r\nII\r\n").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].sequence, "MA");
    }
}
