use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ArffType {
    Numeric,
    /// Nominal levels in declaration order.
    Nominal(Vec<String>),
    String,
    Date,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArffAttribute {
    pub name: String,
    pub kind: ArffType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArffHeader {
    pub relation: String,
    pub attributes: Vec<ArffAttribute>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("arff", reason)
}

/// Splits on unquoted `sep`, honoring `'` and `"` quoting with backslash
/// escapes. Tokens are trimmed and unquoted.
fn split_quoted(s: &str, sep: char) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut quoted = false;
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match quote {
            Some(q) => {
                if c == '\\' {
                    cur.push(chars.next().ok_or_else(|| bad("dangling escape"))?);
                } else if c == q {
                    quote = None;
                } else {
                    cur.push(c);
                }
            }
            None => {
                if c == sep {
                    out.push(finish(&mut cur, &mut quoted));
                } else if quoted && c.is_whitespace() {
                    continue;
                } else if (c == '\'' || c == '"') && cur.trim().is_empty() {
                    cur.clear();
                    quote = Some(c);
                    quoted = true;
                } else {
                    cur.push(c);
                }
            }
        }
    }
    if quote.is_some() {
        return Err(bad("unterminated quote"));
    }
    out.push(finish(&mut cur, &mut quoted));
    Ok(out)
}

fn finish(cur: &mut String, quoted: &mut bool) -> String {
    let t = if *quoted { cur.clone() } else { cur.trim().to_string() };
    cur.clear();
    *quoted = false;
    t
}

/// Splits `@attribute <name> <type>` into name and type text.
fn attribute_parts(rest: &str) -> Result<(String, &str)> {
    let rest = rest.trim_start();
    let first = rest.chars().next().ok_or_else(|| bad("attribute without a name"))?;
    if first == '\'' || first == '"' {
        let end = rest[1..].find(first).ok_or_else(|| bad("unterminated attribute name"))? + 1;
        Ok((rest[1..end].to_string(), rest[end + 1..].trim()))
    } else {
        let end = rest.find(char::is_whitespace).ok_or_else(|| bad("attribute without a type"))?;
        Ok((rest[..end].to_string(), rest[end..].trim()))
    }
}

fn parse_type(t: &str) -> Result<ArffType> {
    if let Some(inner) = t.strip_prefix('{') {
        let inner = inner.strip_suffix('}').ok_or_else(|| bad("unterminated nominal list"))?;
        let levels = split_quoted(inner, ',')?;
        if levels.iter().any(|l| l.is_empty()) {
            return Err(bad("empty nominal level"));
        }
        return Ok(ArffType::Nominal(levels));
    }
    let word = t.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
    match word.as_str() {
        "numeric" | "real" | "integer" => Ok(ArffType::Numeric),
        "string" => Ok(ArffType::String),
        "date" => Ok(ArffType::Date),
        _ => Err(bad(format!("unsupported attribute type `{t}`"))),
    }
}

fn keyword<'a>(line: &'a str, kw: &str) -> Option<&'a str> {
    let head = line.get(..kw.len())?;
    if head.eq_ignore_ascii_case(kw) {
        let rest = &line[kw.len()..];
        (rest.is_empty() || rest.starts_with(char::is_whitespace)).then_some(rest)
    } else {
        None
    }
}

/// Reads the header up to and including `@data`.
pub fn read_arff_header<R: BufRead>(r: &mut R) -> Result<ArffHeader> {
    let mut relation = None;
    let mut attributes = Vec::new();
    let mut line = String::new();
    loop {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| bad(e.to_string()))?;
        if n == 0 {
            return Err(bad("missing @data section"));
        }
        let l = line.trim();
        if l.is_empty() || l.starts_with('%') {
            continue;
        }
        if let Some(rest) = keyword(l, "@relation") {
            relation = Some(split_quoted(rest, '\u{0}')?.remove(0));
        } else if let Some(rest) = keyword(l, "@attribute") {
            let (name, t) = attribute_parts(rest)?;
            attributes.push(ArffAttribute {
                name,
                kind: parse_type(t)?,
            });
        } else if keyword(l, "@data").is_some() {
            break;
        } else {
            return Err(bad(format!("unexpected header line `{l}`")));
        }
    }
    if attributes.is_empty() {
        return Err(bad("no attributes"));
    }
    Ok(ArffHeader {
        relation: relation.unwrap_or_default(),
        attributes,
    })
}

/// Parses one data line into cells, `None` for `?`. Sparse `{i v, ...}`
/// rows fill unlisted numeric cells with `0` and nominal ones with the first
/// level.
pub fn parse_arff_row(line: &str, header: &ArffHeader) -> Result<Vec<Option<String>>> {
    let n = header.attributes.len();
    let l = line.trim();
    let cells: Vec<String> = if let Some(inner) = l.strip_prefix('{') {
        let inner = inner.strip_suffix('}').ok_or_else(|| bad("unterminated sparse row"))?;
        let mut row: Vec<String> = header
            .attributes
            .iter()
            .map(|a| match &a.kind {
                ArffType::Nominal(levels) => levels[0].clone(),
                _ => "0".to_string(),
            })
            .collect();
        if !inner.trim().is_empty() {
            for pair in split_quoted(inner, ',')? {
                let (i, v) = pair.split_once(char::is_whitespace).ok_or_else(|| bad("sparse entry without a value"))?;
                let i: usize = i.parse().map_err(|_| bad(format!("bad sparse index `{i}`")))?;
                let slot = row.get_mut(i).ok_or_else(|| bad(format!("sparse index {i} out of range")))?;
                *slot = v.trim().trim_matches(|c| c == '\'' || c == '"').to_string();
            }
        }
        row
    } else {
        split_quoted(l, ',')?
    };
    if cells.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cells.len(),
        });
    }
    cells
        .into_iter()
        .zip(&header.attributes)
        .map(|(c, a)| {
            if c == "?" {
                return Ok(None);
            }
            match &a.kind {
                ArffType::Numeric => {
                    c.parse::<f64>().map_err(|_| bad(format!("`{c}` is not numeric in `{}`", a.name)))?;
                }
                ArffType::Nominal(levels) if !levels.contains(&c) => {
                    return Err(bad(format!("`{c}` is not a level of `{}`", a.name)));
                }
                _ => {}
            }
            Ok(Some(c))
        })
        .collect()
}

/// Streams ARFF data rows as CSV with a header row, passing each present
/// cell through `map(attribute, value)`. Missing cells become empty. Returns
/// the header and the number of rows written.
pub fn arff_to_csv<R: BufRead, W: Write>(
    mut r: R,
    w: W,
    mut map: impl FnMut(&ArffAttribute, &str) -> String,
) -> Result<(ArffHeader, usize)> {
    let header = read_arff_header(&mut r)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header.attributes.iter().map(|a| a.name.as_str()))?;
    let mut rows = 0;
    let mut line = String::new();
    let mut record: Vec<String> = Vec::with_capacity(header.attributes.len());
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(|e| bad(e.to_string()))? == 0 {
            break;
        }
        let l = line.trim();
        if l.is_empty() || l.starts_with('%') {
            continue;
        }
        record.clear();
        for (j, c) in parse_arff_row(l, &header)?.into_iter().enumerate() {
            record.push(c.map_or_else(String::new, |v| map(&header.attributes[j], &v)));
        }
        out.write_record(&record)?;
        rows += 1;
    }
    out.flush().map_err(|e| bad(e.to_string()))?;
    Ok((header, rows))
}
