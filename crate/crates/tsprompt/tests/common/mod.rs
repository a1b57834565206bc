//! Shared helpers: per-format extractors, random series and a scripted
//! HTTP stub server.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsprompt_core::{ClockTime, PriceSeries, PromptFormat, SeriesKind, Timestamp, Yen};

/// A point as recovered from text: timestamp key (`HH:MM` or days ago) and
/// price text. Direct output carries no timestamps, so its key is `None`.
pub type Point = (Option<String>, String);

/// Expected points of `series` in extractor form.
pub fn expected_points(series: &PriceSeries, format: PromptFormat) -> Vec<Point> {
    let mut v: Vec<Point> = series
        .points()
        .iter()
        .map(|(t, p)| {
            let key = match t {
                Timestamp::Clock(c) => c.to_string(),
                Timestamp::DaysAgo(d) => d.to_string(),
            };
            ((format != PromptFormat::Direct).then_some(key), p.to_string())
        })
        .collect();
    v.sort();
    v
}

fn days_key(label: &str) -> String {
    // "7DaysAgo" / "1DayAgo" -> "7" / "1"; clock labels pass through.
    match label.find('D') {
        Some(i) if label.ends_with("Ago") => label[..i].to_string(),
        _ => label.to_string(),
    }
}

/// Recovers the points from serialized text, independently of the
/// serializer code. Returns `None` on text that does not have the expected shape.
pub fn extract(format: PromptFormat, text: &str) -> Option<Vec<Point>> {
    let mut pts = match format {
        PromptFormat::Direct => text.split(' ').map(|p| (None, p.to_string())).collect(),
        PromptFormat::Column => {
            let mut lines = text.lines();
            let times = lines.next()?.split_once(": ")?.1;
            let prices = lines.next()?.split_once(": ")?.1;
            if lines.next().is_some() {
                return None;
            }
            let t: Vec<&str> = times.split(' ').collect();
            let p: Vec<&str> = prices.split(' ').collect();
            if t.len() != p.len() {
                return None;
            }
            t.iter().zip(&p).map(|(t, p)| (Some(days_key(t)), p.to_string())).collect()
        }
        PromptFormat::Row => text
            .lines()
            .skip(1)
            .map(|l| l.split_once(' ').map(|(t, p)| (Some(days_key(t)), p.to_string())))
            .collect::<Option<Vec<_>>>()?,
        PromptFormat::PythonList => {
            let mut groups = Vec::new();
            let mut rest = text;
            while let Some(open) = rest.find('[') {
                let close = rest[open..].find(']')? + open;
                groups.push(&rest[open + 1..close]);
                rest = &rest[close + 1..];
            }
            if groups.len() != 2 {
                return None;
            }
            let t: Vec<String> = groups[0].split(", ").map(|s| days_key(s.trim_matches('"'))).collect();
            let p: Vec<&str> = groups[1].split(", ").collect();
            if t.len() != p.len() {
                return None;
            }
            t.into_iter().zip(p).map(|(t, p)| (Some(t), p.to_string())).collect()
        }
        PromptFormat::PythonListNested => {
            let inner = text.split_once(" = [")?.1.strip_suffix(']')?;
            inner
                .split("], [")
                .map(|pair| {
                    let pair = pair.trim_start_matches('[').trim_end_matches(']');
                    let (t, p) = pair.split_once(", ")?;
                    Some((Some(days_key(t.trim_matches('"'))), p.to_string()))
                })
                .collect::<Option<Vec<_>>>()?
        }
        PromptFormat::PythonDictionary => {
            let inner = text.split_once(" = {")?.1.strip_suffix('}')?;
            inner
                .split(", ")
                .map(|kv| {
                    let (k, v) = kv.split_once(':')?;
                    // Clock keys contain a colon themselves: "15:00":9988.05
                    let (k, v) = if k.ends_with('"') { (k, v) } else { kv.rsplit_once(':')? };
                    Some((Some(days_key(k.trim_matches('"'))), v.to_string()))
                })
                .collect::<Option<Vec<_>>>()?
        }
        PromptFormat::HtmlTable => text
            .split("<tr>")
            .skip(2)
            .map(|row| {
                let cells: Vec<&str> = row
                    .split("<td>")
                    .skip(1)
                    .map(|c| c.split("</td>").next().unwrap_or(""))
                    .collect();
                (cells.len() == 2).then(|| (Some(days_key(cells[0])), cells[1].to_string()))
            })
            .collect::<Option<Vec<_>>>()?,
        PromptFormat::LatexTable => {
            let body = text.split_once("\\hline \\hline ")?.1.split_once("\\end{tabular}")?.0;
            body.split(" \\\\ \\hline")
                .map(str::trim)
                .filter(|r| !r.is_empty())
                .map(|r| r.split_once(" & ").map(|(t, p)| (Some(days_key(t)), p.to_string())))
                .collect::<Option<Vec<_>>>()?
        }
        PromptFormat::TextEnglish => text
            .lines()
            .map(|l| {
                let l = l.strip_suffix(" yen.")?;
                if let Some(rest) = l.strip_prefix("Nikkei225 closing stock price as of ") {
                    let (when, price) = rest.split_once(" was ")?;
                    let days = if when == "yesterday" { "1".to_string() } else { when.strip_suffix(" days ago")?.to_string() };
                    Some((Some(days), price.to_string()))
                } else {
                    let rest = l.strip_prefix("Nikkei225 as of ")?;
                    let (t, p) = rest.split_once(" is ")?;
                    Some((Some(t.to_string()), p.to_string()))
                }
            })
            .collect::<Option<Vec<_>>>()?,
        PromptFormat::TextJapanese => text
            .lines()
            .map(|l| {
                let l = l.strip_suffix("円。")?;
                if let Some((days, rest)) = l.split_once("日前のNikkei225終値は") {
                    Some((Some(days.to_string()), rest.to_string()))
                } else {
                    let (t, p) = l.split_once("時点のNikkei225は")?;
                    Some((Some(t.to_string()), p.to_string()))
                }
            })
            .collect::<Option<Vec<_>>>()?,
    };
    pts.sort();
    Some(pts)
}

/// A random valid series: any non-empty subset of the grid, random prices.
pub fn random_series(rng: &mut ChaCha8Rng, kind: SeriesKind) -> PriceSeries {
    let slots: Vec<Timestamp> = match kind {
        SeriesKind::ShortTerm => ClockTime::session_times().map(Timestamp::Clock).collect(),
        SeriesKind::LongTerm => (1..=7).map(|d| Timestamp::days_ago(d).unwrap()).collect(),
    };
    loop {
        let mut pts: Vec<(Timestamp, Yen)> = Vec::new();
        for &t in &slots {
            if kind == SeriesKind::LongTerm || rng.random_bool(0.6) {
                pts.push((t, Yen::from_hundredths(rng.random_range(1..10_000_000))));
            }
        }
        if !pts.is_empty() {
            return PriceSeries::new(kind, pts, "Nikkei225").unwrap();
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One scripted HTTP answer.
#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn ok(body: impl Into<String>) -> Self {
        Reply { status: 200, body: body.into(), delay: Duration::ZERO }
    }

    pub fn status(status: u16, body: impl Into<String>) -> Self {
        Reply { status, body: body.into(), delay: Duration::ZERO }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub fn chat_body(content: &str) -> String {
    serde_json::json!({
        "id": "x", "model": "stub-model",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// A local server answering requests from a script; the last reply repeats.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, String)>>>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let peak = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let counter = Arc::new(AtomicUsize::new(0));
        let script = Arc::new(script);
        {
            let requests = Arc::clone(&requests);
            let peak = Arc::clone(&peak);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let (requests, peak, in_flight, counter, script) =
                        (requests.clone(), peak.clone(), in_flight.clone(), counter.clone(), script.clone());
                    thread::spawn(move || {
                        let Some((head, body)) = read_request(&stream) else { return };
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        requests.lock().unwrap().push((head, body));
                        let n = counter.fetch_add(1, Ordering::SeqCst);
                        let reply = script[n.min(script.len() - 1)].clone();
                        thread::sleep(reply.delay);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                        let mut stream = stream;
                        let _ = write!(
                            stream,
                            "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                            reply.status,
                            reply.body.len(),
                            reply.body
                        );
                        let _ = stream.flush();
                    });
                }
            });
        }
        StubServer { url, requests, peak_in_flight: peak }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn read_request(stream: &TcpStream) -> Option<(String, String)> {
    let mut reader = BufReader::new(stream);
    let mut head = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        head.push_str(&line);
    }
    let len = head
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse::<usize>().ok())?
        })
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some((head, String::from_utf8_lossy(&body).into_owned()))
}
