use super::{Cue, SubtitleFormat, SubtitleTrack, TrackSource};
use crate::error::{Error, Result};

/// Parses an SRT or WebVTT file. A UTF-8 BOM is tolerated; an empty file yields an empty
/// track. Timestamp errors name the 1-based line.
pub fn parse_track(bytes: &[u8], format: SubtitleFormat) -> Result<SubtitleTrack> {
    let text = std::str::from_utf8(bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes))
        .map_err(|e| Error::Format {
            format: "subtitle",
            message: format!("not UTF-8: {e}"),
        })?;
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let blocks = split_blocks(&lines);
    let mut blocks = blocks.into_iter().peekable();

    if format == SubtitleFormat::Vtt {
        match blocks.peek() {
            None => return Ok(SubtitleTrack::default()),
            Some(header) if header.lines[0].starts_with("WEBVTT") => {
                blocks.next();
            }
            Some(header) => {
                return Err(Error::Parse {
                    line: header.first_line,
                    message: "missing WEBVTT header".into(),
                })
            }
        }
    }

    let mut cues = Vec::new();
    for block in blocks {
        if format == SubtitleFormat::Vtt
            && ["NOTE", "STYLE", "REGION"]
                .iter()
                .any(|kw| block.lines[0].starts_with(kw))
        {
            continue;
        }
        cues.push(parse_block(&block, format)?);
    }
    Ok(SubtitleTrack::new(cues, TrackSource::Unknown))
}

struct Block<'a> {
    first_line: usize,
    lines: Vec<&'a str>,
}

fn split_blocks<'a>(lines: &[&'a str]) -> Vec<Block<'a>> {
    let mut blocks = Vec::new();
    let mut current: Option<Block<'a>> = None;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            blocks.extend(current.take());
        } else {
            current
                .get_or_insert_with(|| Block {
                    first_line: i + 1,
                    lines: Vec::new(),
                })
                .lines
                .push(line);
        }
    }
    blocks.extend(current);
    blocks
}

fn parse_block(block: &Block<'_>, format: SubtitleFormat) -> Result<Cue> {
    // the timing line is first, or second after a numeric index / cue identifier
    let timing_idx = if block.lines[0].contains("-->") {
        0
    } else if block.lines.len() > 1
        && (block.lines[1].contains("-->")
            || (format == SubtitleFormat::Srt && block.lines[0].trim().parse::<u64>().is_ok()))
    {
        1
    } else {
        let idx = usize::from(block.lines.len() > 1 && format == SubtitleFormat::Srt);
        return Err(Error::Parse {
            line: block.first_line + idx,
            message: format!("expected a timestamp line, found {:?}", block.lines[idx]),
        });
    };
    let line_no = block.first_line + timing_idx;
    let (start_s, end_s) = parse_timing(block.lines[timing_idx]).ok_or_else(|| Error::Parse {
        line: line_no,
        message: format!("malformed timestamp line {:?}", block.lines[timing_idx]),
    })?;
    let text = block.lines[timing_idx + 1..]
        .iter()
        .map(|l| clean_markup(l))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Cue::new(text, start_s, end_s))
}

fn parse_timing(line: &str) -> Option<(f64, f64)> {
    let (start, rest) = line.split_once("-->")?;
    // WebVTT cue settings follow the end timestamp
    let end = rest.split_whitespace().next()?;
    Some((parse_timestamp(start.trim())?, parse_timestamp(end)?))
}

/// `HH:MM:SS,mmm`, `HH:MM:SS.mmm` or `MM:SS.mmm`.
fn parse_timestamp(s: &str) -> Option<f64> {
    let (clock, frac) = s.split_once([',', '.'])?;
    if frac.is_empty() || frac.len() > 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let millis: u64 = frac.parse::<u64>().ok()? * 10u64.pow(3 - frac.len() as u32);
    let parts: Vec<&str> = clock.split(':').collect();
    let nums: Option<Vec<u64>> = parts
        .iter()
        .map(|p| {
            if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                None
            } else {
                p.parse().ok()
            }
        })
        .collect();
    let nums = nums?;
    let (h, m, sec) = match nums.as_slice() {
        [h, m, s] => (*h, *m, *s),
        [m, s] => (0, *m, *s),
        _ => return None,
    };
    if m >= 60 || sec >= 60 {
        return None;
    }
    Some(((h * 3600 + m * 60 + sec) * 1000 + millis) as f64 / 1000.0)
}

/// Drops `<...>` tags (styling, inline karaoke timestamps) and decodes the common entities.
fn clean_markup(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_tag = false;
    for c in line.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out.replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&")
}

#[cfg(test)]
mod tests {
    use super::*;

    const VTT: &str = "WEBVTT\nKind: captions\n\nNOTE a comment\n\n1\n00:00:01.000 --> 00:00:02.500 align:start\nhello <b>world</b>\n\n00:03.000 --> 00:04.000\nsecond &amp; last\n";

    #[test]
    fn parses_two_cue_vtt() {
        let t = parse_track(VTT.as_bytes(), SubtitleFormat::Vtt).unwrap();
        assert_eq!(
            t.cues,
            vec![
                Cue::new("hello world", 1.0, 2.5),
                Cue::new("second & last", 3.0, 4.0)
            ]
        );
    }

    #[test]
    fn parses_srt_with_bom_and_crlf() {
        let srt = "\u{feff}1\r\n00:00:01,000 --> 00:00:02,000\r\nline one\r\nline two\r\n\r\n2\r\n00:00:02,000 --> 00:00:03,000\r\nnext\r\n";
        let t = parse_track(srt.as_bytes(), SubtitleFormat::Srt).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.cues[0].text, "line one line two");
    }

    #[test]
    fn empty_file_is_empty_track() {
        assert!(parse_track(b"", SubtitleFormat::Srt).unwrap().is_empty());
        assert!(parse_track(b"", SubtitleFormat::Vtt).unwrap().is_empty());
        assert!(parse_track(b"WEBVTT\n", SubtitleFormat::Vtt).unwrap().is_empty());
    }

    #[test]
    fn malformed_timestamp_names_its_line() {
        let mut srt = String::new();
        for i in 0..10 {
            let stamp = if i == 6 {
                "00:00:06,000 --> 00:00:0x,500".to_string()
            } else {
                format!("00:00:{i:02},000 --> 00:00:{i:02},500")
            };
            srt.push_str(&format!("{}\n{stamp}\ncue {i}\n\n", i + 1));
        }
        // block i starts at line 4*i + 1; its timing line is the next one
        let err = parse_track(srt.as_bytes(), SubtitleFormat::Srt).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4 * 6 + 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn srt_missing_arrow_is_an_error() {
        let srt = "1\n00:00:01,000 - 00:00:02,000\ntext\n";
        assert!(matches!(
            parse_track(srt.as_bytes(), SubtitleFormat::Srt),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn vtt_without_header_is_rejected() {
        let err = parse_track(b"00:01.000 --> 00:02.000\nx\n", SubtitleFormat::Vtt).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn timestamp_forms() {
        assert_eq!(parse_timestamp("01:02:03,004"), Some(3723.004));
        assert_eq!(parse_timestamp("02:03.5"), Some(123.5));
        assert_eq!(parse_timestamp("00:61.000"), None);
        assert_eq!(parse_timestamp("1:2"), None);
        assert_eq!(parse_timestamp("aa:00:00.000"), None);
    }
}
