//! Shared fixtures for the integration suites: seeded data generators,
//! brute-force oracles, and the mode-equivalence query corpus.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use jsoniq_core::io::OutputStyle;
use jsoniq_core::jdm::TypeClass;
use jsoniq_core::parser::parse_json_line;
use jsoniq_core::{Engine, EngineConfig, Error, Item, NullOrder, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn test_engine(workers: usize, partitions: usize) -> Engine {
    Engine::new(EngineConfig {
        workers,
        default_partitions: partitions,
        ..EngineConfig::default()
    })
    .unwrap()
}

pub fn run_auto(engine: &Engine, query: &str) -> Result<Vec<Item>> {
    let compiled = engine.compile(query)?;
    Ok(engine.execute(&compiled)?.into_items())
}

pub fn run_forced_local(engine: &Engine, query: &str) -> Result<Vec<Item>> {
    let compiled = engine.compile(query)?;
    Ok(engine.execute_local(&compiled)?.into_items())
}

/// Serialized output of a run, or the error display; used for byte-level
/// comparison across modes.
pub fn run_to_text(engine: &Engine, query: &str, forced_local: bool) -> String {
    let result = (|| {
        let compiled = engine.compile(query)?;
        let output =
            if forced_local { engine.execute_local(&compiled) } else { engine.execute(&compiled) }?;
        Ok::<_, Error>(output.serialize(OutputStyle::JsonLines))
    })();
    match result {
        Ok(text) => text,
        Err(e) => format!("ERROR {e}\n"),
    }
}

pub fn read_jsonl(path: &Path) -> Vec<Item> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_json_line(l).unwrap())
        .collect()
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

const AUTHORS: [&str; 5] = ["alice", "bob", "carol", "dave", "erin"];
const EVENT_TYPES: [&str; 5] =
    ["PushEvent", "ReleaseEvent", "WatchEvent", "ForkEvent", "IssuesEvent"];

fn sha(rng: &mut ChaCha8Rng) -> String {
    (0..7).map(|_| char::from_digit(rng.gen_range(0..16), 16).unwrap()).collect()
}

/// Fig-1-shaped push events: type, commits (2–10, authors from a small
/// pool), repository, created_at.
pub fn generate_push_events(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..n {
        let commits = rng.gen_range(2..=10);
        let mut line = String::from("{\"type\":\"PushEvent\",\"commits\":[");
        for c in 0..commits {
            if c > 0 {
                line.push(',');
            }
            let author = AUTHORS[rng.gen_range(0..AUTHORS.len())];
            write!(line, "{{\"author\":\"{author}\",\"sha\":\"{}\"}}", sha(&mut rng)).unwrap();
        }
        write!(
            line,
            "],\"repository\":{{\"name\":\"repo-{}\",\"fork\":{}}},\"created_at\":\"2013-08-{:02}\"}}",
            i % 97,
            rng.gen_bool(0.2),
            1 + i % 28
        )
        .unwrap();
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// GHCN-shaped weather records. Each (station, date) pair carries a random
/// subset of the four metrics, at most one record per metric, so the
/// TMAX/TMIN join in WeatherQ2 is well-defined.
pub fn generate_weather(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metrics = ["TMIN", "TMAX", "PRCP", "SNWD"];
    let stations: Vec<String> =
        (0..120).map(|i| format!("GHCND:ACW{:08}", i * 7 + 11)).collect();
    let dates: Vec<String> = {
        let mut dates = Vec::new();
        for year in [1999, 2001, 2003, 2004, 2007, 2011] {
            for month in [1, 6, 7, 12] {
                for day in [1, 5, 25] {
                    dates.push(format!("{year}-{month:02}-{day:02}T00:00:00.000"));
                }
            }
        }
        dates
    };
    let mut lines = Vec::with_capacity(n);
    'outer: loop {
        for station in &stations {
            for date in &dates {
                let mut picked = metrics;
                picked.shuffle(&mut rng);
                let k = rng.gen_range(1..=4usize);
                for metric in picked.iter().take(k) {
                    let value = rng.gen_range(-200i64..400);
                    lines.push(format!(
                        "{{\"data\":{{\"date\":\"{date}\",\"value\":{value},\"dataType\":\"{metric}\",\"station\":\"{station}\"}}}}"
                    ));
                    if lines.len() == n {
                        break 'outer;
                    }
                }
            }
        }
    }
    lines.shuffle(&mut rng);
    let mut out = String::with_capacity(n * 100);
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// Github-shaped events with ~10% type-heterogeneous paths: `actor` is
/// sometimes a bare string, `payload.issue` flips between number and
/// string, and `payload.release.prerelease` is sometimes a string.
pub fn generate_github(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logins: Vec<String> = (0..200).map(|i| format!("user-{:03}", (i * 13) % 500)).collect();
    let mut out = String::with_capacity(n * 160);
    for i in 0..n {
        let ty = EVENT_TYPES[rng.gen_range(0..EVENT_TYPES.len())];
        let login = &logins[rng.gen_range(0..logins.len())];
        let mut line = format!("{{\"type\":\"{ty}\",\"actor\":");
        if rng.gen_bool(0.1) {
            write!(line, "\"{login}\"").unwrap();
        } else {
            write!(line, "{{\"login\":\"{login}\",\"id\":{}}}", rng.gen_range(1..100000)).unwrap();
        }
        line.push_str(",\"payload\":{");
        match ty {
            "ReleaseEvent" => {
                let prerelease: String = if rng.gen_bool(0.1) {
                    format!("\"{}\"", rng.gen_bool(0.5))
                } else {
                    format!("{}", rng.gen_bool(0.3))
                };
                write!(
                    line,
                    "\"release\":{{\"prerelease\":{prerelease},\"author\":{{\"login\":\"{}\"}}}}",
                    logins[rng.gen_range(0..logins.len())]
                )
                .unwrap();
            }
            "PushEvent" => {
                let commits = rng.gen_range(0..4);
                line.push_str("\"commits\":[");
                for c in 0..commits {
                    if c > 0 {
                        line.push(',');
                    }
                    write!(line, "{{\"author\":\"{}\"}}", logins[rng.gen_range(0..logins.len())])
                        .unwrap();
                }
                line.push(']');
            }
            _ => {
                if rng.gen_bool(0.1) {
                    write!(line, "\"issue\":\"{}\"", rng.gen_range(0..500)).unwrap();
                } else {
                    write!(line, "\"issue\":{}", rng.gen_range(0..500)).unwrap();
                }
            }
        }
        write!(line, "}},\"id\":{i}}}").unwrap();
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

// ---------------------------------------------------------------------------
// Oracles (independent brute-force implementations)
// ---------------------------------------------------------------------------

fn field<'a>(item: &'a Item, key: &str) -> Option<&'a Item> {
    item.as_object().and_then(|o| o.get(key))
}

fn str_field<'a>(item: &'a Item, key: &str) -> Option<&'a str> {
    field(item, key).and_then(Item::as_str)
}

/// Oracle for the top-committer query: per event, count commits per
/// author, pick the author with the highest count (ties: smallest author in
/// codepoint order, which is what group order plus a stable descending sort
/// and [1] produce), and return the array of that author's commits.
pub fn top_committer_oracle(events: &[Item]) -> Vec<Item> {
    let mut out = Vec::new();
    for event in events {
        let commits = match field(event, "commits").and_then(Item::as_array) {
            Some(c) => c,
            None => {
                out.push(Item::array(vec![]));
                continue;
            }
        };
        let mut counts: Vec<(&str, usize)> = Vec::new();
        for commit in commits {
            if let Some(author) = str_field(commit, "author") {
                match counts.iter_mut().find(|(a, _)| *a == author) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((author, 1)),
                }
            }
        }
        // Group order is author order; the stable descending sort keeps
        // that order among equal counts.
        counts.sort_by(|a, b| a.0.cmp(b.0));
        let top = counts
            .iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(author, _)| *author);
        let selected: Vec<Item> = match top {
            None => Vec::new(),
            Some(top) => commits
                .iter()
                .filter(|c| str_field(c, "author") == Some(top))
                .cloned()
                .collect(),
        };
        out.push(Item::array(selected));
    }
    out
}

fn weather_fields(record: &Item) -> Option<(&str, &Item, &str, &str)> {
    let data = field(record, "data")?;
    Some((
        str_field(data, "date")?,
        field(data, "value")?,
        str_field(data, "dataType")?,
        str_field(data, "station")?,
    ))
}

/// WeatherQ0 oracle: records measured on a December 25 in 2003 or later.
pub fn weather_q0_oracle(records: &[Item]) -> Vec<Item> {
    records
        .iter()
        .filter(|r| {
            let Some((date, _, _, _)) = weather_fields(r) else { return false };
            let year: i64 = date[0..4].parse().unwrap_or(0);
            &date[5..10] == "12-25" && year >= 2003
        })
        .cloned()
        .collect()
}

/// WeatherQ1 oracle: per date, the number of records reporting TMIN,
/// in date order.
pub fn weather_q1_oracle(records: &[Item]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for record in records {
        let Some((date, _, data_type, _)) = weather_fields(record) else { continue };
        if data_type != "TMIN" {
            continue;
        }
        match counts.iter_mut().find(|(d, _)| d == date) {
            Some((_, n)) => *n += 1,
            None => counts.push((date.to_string(), 1)),
        }
    }
    counts.sort();
    counts
}

/// WeatherQ2 oracle: mean of (TMAX - TMIN) over station/date pairs
/// reporting both, accumulated as f64.
pub fn weather_q2_oracle(records: &[Item]) -> f64 {
    use std::collections::HashMap;
    let mut pairs: HashMap<(String, String), (Option<f64>, Option<f64>)> = HashMap::new();
    for record in records {
        let Some((date, value, data_type, station)) = weather_fields(record) else { continue };
        let value = match value {
            Item::Integer(i) => {
                use num_traits::ToPrimitive;
                i.to_f64().unwrap()
            }
            Item::Double(d) => *d,
            _ => continue,
        };
        let entry = pairs.entry((station.to_string(), date.to_string())).or_default();
        match data_type {
            "TMAX" => entry.0 = Some(value),
            "TMIN" => entry.1 = Some(value),
            _ => {}
        }
    }
    let diffs: Vec<f64> = pairs
        .values()
        .filter_map(|(tmax, tmin)| Some(tmax? - tmin?))
        .collect();
    diffs.iter().sum::<f64>() / diffs.len() as f64
}

/// Effective boolean value of a single heterogeneous value, mirrored from
/// the spec rules, for the GithubFilter oracle.
fn ebv_of(value: &Item) -> bool {
    match value {
        Item::Null => false,
        Item::Boolean(b) => *b,
        Item::String(s) => !s.is_empty(),
        Item::Integer(_) | Item::Decimal(_) | Item::Double(_) => {
            TypeClass::of(value) == Some(TypeClass::Number) && {
                match value {
                    Item::Integer(i) => use_num(i),
                    Item::Decimal(d) => !bigdecimal_zero(d),
                    Item::Double(d) => *d != 0.0 && !d.is_nan(),
                    _ => unreachable!(),
                }
            }
        }
        Item::Array(_) | Item::Object(_) => true,
    }
}

fn use_num(i: &num_bigint::BigInt) -> bool {
    use num_traits::Zero;
    !i.is_zero()
}

fn bigdecimal_zero(d: &bigdecimal::BigDecimal) -> bool {
    use num_traits::Zero;
    d.is_zero()
}

/// GithubFilter oracle: logins of release authors for prerelease releases.
pub fn github_filter_oracle(events: &[Item]) -> Vec<Item> {
    events
        .iter()
        .filter(|e| str_field(e, "type") == Some("ReleaseEvent"))
        .filter(|e| {
            field(e, "payload")
                .and_then(|p| field(p, "release"))
                .and_then(|r| field(r, "prerelease"))
                .map(ebv_of)
                .unwrap_or(false)
        })
        .filter_map(|e| {
            field(e, "payload")
                .and_then(|p| field(p, "release"))
                .and_then(|r| field(r, "author"))
                .and_then(|a| field(a, "login"))
                .cloned()
        })
        .collect()
}

/// GithubGrouping oracle: event counts per type, in type order.
pub fn github_grouping_oracle(events: &[Item]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for event in events {
        let Some(ty) = str_field(event, "type") else { continue };
        match counts.iter_mut().find(|(t, _)| t == ty) {
            Some((_, n)) => *n += 1,
            None => counts.push((ty.to_string(), 1)),
        }
    }
    counts.sort();
    counts
}

/// GithubSorting oracle: actors stable-sorted by login, absent logins
/// first (empty least).
pub fn github_sorting_oracle(events: &[Item]) -> Vec<Item> {
    let mut keyed: Vec<(Option<String>, usize, Item)> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let actor = field(e, "actor").cloned().unwrap_or(Item::Null);
            let login = actor
                .as_object()
                .and_then(|o| o.get("login"))
                .and_then(Item::as_str)
                .map(str::to_string);
            (login, i, actor)
        })
        .collect();
    keyed.sort_by(|a, b| match (&a.0, &b.0) {
        (None, None) => a.1.cmp(&b.1),
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => x.cmp(y).then(a.1.cmp(&b.1)),
    });
    keyed.into_iter().map(|(_, _, actor)| actor).collect()
}

/// Run the whole corpus over partition counts {1,2,3,7,16} and worker
/// counts {1, max}, comparing parallel output byte-for-byte against
/// forced-local output. Returns (queries, runs).
pub fn verify_mode_equivalence() -> (usize, usize) {
    let corpus = corpus();
    let max_workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let workers = if max_workers > 1 { vec![1, max_workers] } else { vec![1] };
    let mut runs = 0usize;
    for query in &corpus.queries {
        let baseline = run_to_text(&test_engine(1, 1), query, true);
        for &p in &[1usize, 2, 3, 7, 16] {
            for &w in &workers {
                let engine = test_engine(w, p);
                let auto = run_to_text(&engine, query, false);
                assert_eq!(
                    auto, baseline,
                    "divergence for query {query:?} at partitions={p} workers={w}"
                );
                let local = run_to_text(&engine, query, true);
                assert_eq!(local, baseline, "local drift for {query:?} at p={p} w={w}");
                runs += 2;
            }
        }
    }
    (corpus.queries.len(), runs)
}

// ---------------------------------------------------------------------------
// The acceptance query texts
// ---------------------------------------------------------------------------

pub fn top_committer_query(events_path: &Path) -> String {
    format!(
        r#"for $e in json-file("{}")
let $top-committer := (
  for $c in $e.commits[]
  group by $c.author
  stable order by count($c) descending
  return $c.author)[1]
return [$e.commits[][$$.author eq $top-committer]]"#,
        events_path.display()
    )
}

pub fn weather_count_query(path: &Path) -> String {
    format!("count(json-file(\"{}\"))", path.display())
}

pub fn weather_q0_query(path: &Path) -> String {
    format!(
        "for $w in json-file(\"{}\") \
         let $d := $w.data.date \
         where substring($d, 6, 5) eq \"12-25\" and substring($d, 1, 4) cast as integer ge 2003 \
         return $w",
        path.display()
    )
}

pub fn weather_q1_query(path: &Path) -> String {
    format!(
        "for $w in json-file(\"{}\") \
         where $w.data.dataType eq \"TMIN\" \
         group by $d := $w.data.date \
         return {{\"date\": $d, \"stations\": count($w)}}",
        path.display()
    )
}

pub fn weather_q2_query(path: &Path) -> String {
    format!(
        "avg( \
           for $w in json-file(\"{}\") \
           where $w.data.dataType eq \"TMAX\" or $w.data.dataType eq \"TMIN\" \
           group by $s := $w.data.station, $d := $w.data.date \
           let $tmax := $w[$$.data.dataType eq \"TMAX\"].data.value \
           let $tmin := $w[$$.data.dataType eq \"TMIN\"].data.value \
           where count($tmax) eq 1 and count($tmin) eq 1 \
           return $tmax - $tmin)",
        path.display()
    )
}

pub fn github_count_query(path: &Path) -> String {
    format!("count(json-file(\"{}\"))", path.display())
}

pub fn github_filter_query(path: &Path) -> String {
    format!(
        "for $e in json-file(\"{}\") \
         where $e.type eq \"ReleaseEvent\" and boolean($e.payload.release.prerelease) \
         return $e.payload.release.author.login",
        path.display()
    )
}

pub fn github_grouping_query(path: &Path) -> String {
    format!(
        "for $e in json-file(\"{}\") group by $t := $e.type \
         return {{\"type\": $t, \"count\": count($e)}}",
        path.display()
    )
}

pub fn github_sorting_query(path: &Path) -> String {
    format!(
        "for $e in json-file(\"{}\") let $l := $e.actor.login order by $l return $e.actor",
        path.display()
    )
}

// ---------------------------------------------------------------------------
// Mode-equivalence corpus
// ---------------------------------------------------------------------------

pub struct Corpus {
    pub dir: PathBuf,
    pub queries: Vec<String>,
    _keep: tempfile::TempDir,
}

static CORPUS: OnceLock<Corpus> = OnceLock::new();

pub fn corpus() -> &'static Corpus {
    CORPUS.get_or_init(build_corpus)
}

fn build_corpus() -> Corpus {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    generate_push_events(&dir.join("events.jsonl"), 30, 11);
    generate_github(&dir.join("github.jsonl"), 60, 12);
    generate_weather(&dir.join("weather.jsonl"), 80, 13);
    std::fs::write(
        dir.join("hetero.jsonl"),
        concat!(
            "{\"v\": 1, \"k\": \"a\"}\n",
            "{\"v\": 1.5, \"k\": \"b\"}\n",
            "{\"v\": 2e0, \"k\": \"a\"}\n",
            "{\"v\": \"3\", \"k\": \"c\"}\n",
            "{\"v\": true}\n",
            "{\"v\": null, \"k\": \"a\"}\n",
            "{\"v\": [1, 2, [3]], \"k\": \"d\"}\n",
            "{\"v\": {\"nested\": {\"deep\": 7}}}\n",
            "{\"k\": \"e\"}\n",
            "{\"v\": -0.5, \"k\": \"b\"}\n",
        ),
    )
    .unwrap();
    std::fs::write(dir.join("lines.txt"), "alpha\n\nbeta gamma\nδέλτα\n").unwrap();
    std::fs::write(dir.join("bad.jsonl"), "{\"ok\":1}\nnope\n{\"ok\":2}\n").unwrap();
    std::fs::write(dir.join("numbers.jsonl"), {
        let mut s = String::new();
        for i in 0..100 {
            writeln!(s, "{{\"n\": {i}}}").unwrap();
        }
        s
    })
    .unwrap();

    let d = dir.display();
    let events = format!("{d}/events.jsonl");
    let github = format!("{d}/github.jsonl");
    let weather = format!("{d}/weather.jsonl");
    let hetero = format!("{d}/hetero.jsonl");
    let numbers = format!("{d}/numbers.jsonl");
    let lines = format!("{d}/lines.txt");
    let bad = format!("{d}/bad.jsonl");

    let queries: Vec<String> = vec![
        // Literals, constructors, sequences
        "1 to 5".into(),
        "()".into(),
        "{\"k\": 1 + 1, \"nested\": {\"arr\": [1 to 3]}}".into(),
        "[()]".into(),
        "((1,2), (), (3))".into(),
        "(\"x\", 1.5, 2e0, null, true)".into(),
        // Arithmetic and comparison
        "7 div 2".into(),
        "7 idiv 2".into(),
        "-7 mod 2".into(),
        "1 + 2 * 3 - 4".into(),
        "1 + ()".into(),
        "1 eq 1.0".into(),
        "(\"a\" lt \"b\", null le 0, false lt true)".into(),
        "2 to 1".into(),
        // Logic and EBV
        "true and (1 eq 1) or not false".into(),
        "boolean((\"\"))".into(),
        // Strings
        "\"a\" || \"b\" || ()".into(),
        "(substring(\"hello world\", 7), substring(\"hello\", 2, 3))".into(),
        "(contains(\"abc\", \"b\"), starts-with(\"abc\", \"ab\"), string-length(\"héllo\"))".into(),
        "(upper-case(\"aé\"), lower-case(\"AÉ\"), concat(\"x\", (), 1))".into(),
        // Types
        "(\"42\" cast as integer, \"x\" castable as integer, 1.5 castable as double)".into(),
        "((1, \"a\") instance of integer*, () instance of integer?, (1,2) instance of atomic+)".into(),
        "(1,2,3) treat as integer+".into(),
        "typeswitch (1.5) case integer return \"i\" case decimal return \"d\" default return \"o\"".into(),
        "switch (\"b\") case \"a\" return 1 case \"b\" return 2 default return 3".into(),
        "if (\"\") then \"t\" else \"f\"".into(),
        "try { 1 div 0 } catch * { \"caught\" }".into(),
        "try { \"a\" + 1 } catch TYPE_ERROR { \"typed\" }".into(),
        "some $x in (1,2,3) satisfies $x gt 2".into(),
        "(min((3,1,2)), max((\"a\",\"c\")), sum((1,2,3.5)), avg((1,2)), count((1,2,3)))".into(),
        "(abs(-2.5), round(2.5), round(-2.5), round(7))".into(),
        // Navigation
        "{\"a\": {\"b\": [1, {\"c\": 2}]}}.a.b[].c".into(),
        "(1, \"x\", {\"a\": 1}, [5]).a".into(),
        "([1,[2]])[], ([1,2,3])[[2]], ([1])[[5]]".into(),
        "(1,2,3)!($$ * $$)".into(),
        "(\"a\",\"b\")!{\"v\": $$}".into(),
        // Predicates
        "(1,2,3,4)[$$ mod 2 eq 0]".into(),
        "(\"a\",\"b\",\"c\")[2]".into(),
        "(1,2,3)[()]".into(),
        "(10,20,30)[$$ idiv 10]".into(),
        // Ranges and folds over files
        format!("count(json-file(\"{numbers}\"))"),
        format!("sum(for $r in json-file(\"{numbers}\") return $r.n)"),
        format!("(min(json-file(\"{numbers}\")!$$.n), max(json-file(\"{numbers}\")!$$.n))"),
        format!("avg(for $r in json-file(\"{numbers}\", 4) return $r.n)"),
        // FLWOR over partitioned sources
        format!("for $e in json-file(\"{events}\") return count($e.commits[])"),
        format!("for $e in json-file(\"{events}\") where $e.repository.fork return $e.repository.name"),
        format!(
            "for $e in json-file(\"{events}\"), $c in $e.commits[] \
             where $c.author eq \"alice\" count $n return {{\"n\": $n, \"sha\": $c.sha}}"
        ),
        format!(
            "for $e in json-file(\"{github}\") group by $t := $e.type \
             return {{\"type\": $t, \"count\": count($e)}}"
        ),
        format!(
            "for $e in json-file(\"{github}\") group by $t := $e.type \
             return {{\"type\": $t, \"events\": [$e.id]}}"
        ),
        format!(
            "for $e in json-file(\"{github}\") let $l := $e.actor.login \
             order by $l empty greatest return [$e.actor.login]"
        ),
        format!(
            "for $w in json-file(\"{weather}\") \
             group by $m := $w.data.dataType \
             order by count($w) descending, $m \
             return {{\"metric\": $m, \"n\": count($w), \"avg\": avg($w.data.value)}}"
        ),
        format!(
            "for $w in json-file(\"{weather}\") where $w.data.value gt 300 \
             order by $w.data.value descending, $w.data.station \
             return ($w.data.station, $w.data.value)"
        ),
        format!("for $x in json-file(\"{hetero}\") return $x.v"),
        format!("for $x in json-file(\"{hetero}\") return [$x.v[]]"),
        format!(
            "for $x in json-file(\"{hetero}\") group by $k := $x.k \
             return {{\"key\": [$k], \"n\": count($x), \"vals\": [$x.v]}}"
        ),
        format!("json-file(\"{hetero}\")!$$.v!{{\"wrapped\": [$$]}}"),
        // Nested FLWOR (the top-committer shape at corpus scale)
        top_committer_query(Path::new(&events)),
        // let over a partitioned sequence; count clause over frames
        format!("let $all := json-file(\"{numbers}\") return (count($all), sum($all!$$.n))"),
        format!("for $r in json-file(\"{numbers}\", 7) count $c where $c mod 25 eq 0 return $c"),
        // Cartesian product with an independent right side
        format!(
            "for $a in json-file(\"{numbers}\")[$$.n lt 4], $b in json-file(\"{numbers}\")[$$.n lt 3] \
             return $a.n * 100 + $b.n"
        ),
        // parallelize and explicit partition counts
        "count(parallelize(1 to 1000, 16))".into(),
        "parallelize((\"a\",\"b\",\"c\"), 2)".into(),
        format!("parallelize(json-file(\"{numbers}\"), 5)[$$.n ge 95]"),
        // text-file
        format!("text-file(\"{lines}\")"),
        format!("for $l in text-file(\"{lines}\") where contains($l, \"a\") return upper-case($l)"),
        format!("count(text-file(\"{lines}\", 3))"),
        // annotate
        format!(
            "annotate(json-file(\"{hetero}\"), {{\"k\": \"string?\", \"v\": \"item?\"}})"
        ),
        format!(
            "for $r in annotate(json-file(\"{numbers}\"), {{\"n\": \"integer\"}}) \
             where $r.n lt 3 return $r"
        ),
        format!(
            "count(annotate(json-file(\"{numbers}\"), {{\"n\": \"double\"}}))"
        ),
        // Conditionals with partitioned branches; untaken branches stay lazy
        format!(
            "if (count(json-file(\"{numbers}\")) gt 10) then \"big\" else json-file(\"{bad}\")"
        ),
        format!("(json-file(\"{numbers}\")[$$.n lt 2], text-file(\"{lines}\"))"),
        // Deterministic errors (compared as error text across modes)
        "for $x in (1, \"a\") order by $x return $x".into(),
        "sum((1, \"a\", 2))".into(),
        "1 + \"a\"".into(),
        format!("json-file(\"{bad}\")"),
        "({\"a\": 1}, {\"a\": 2})[(1,2)]".into(),
        "(1,2) cast as integer".into(),
    ];
    assert!(queries.len() >= 50, "corpus must stay at 50+ queries, has {}", queries.len());
    Corpus { dir, queries, _keep: tmp }
}
