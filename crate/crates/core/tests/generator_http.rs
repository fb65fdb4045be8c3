use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use foodcorpus::document::{extract_document_name, WireExtractor};
use foodcorpus::generator::{GeneratorClient, GeneratorError, HttpGenerator, WireRequest};
use foodcorpus::quality::{ExternalScorer, PerplexityScorer, ScoreError};
use indexmap::IndexMap;
use serde_json::Value;

/// Local endpoint replying with a fixed script, then with the last entry.
struct Mock {
    url: String,
    requests: Arc<Mutex<Vec<Value>>>,
    stop: Box<dyn Fn()>,
    handle: Option<JoinHandle<()>>,
}

impl Mock {
    fn start(script: Vec<(u16, &'static str)>) -> Mock {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}/generate", server.server_addr().to_ip().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        let worker = Arc::clone(&server);
        let handle = std::thread::spawn(move || {
            for (i, mut request) in worker.incoming_requests().enumerate() {
                let mut body = String::new();
                request.as_reader().read_to_string(&mut body).unwrap();
                seen.lock().unwrap().push(serde_json::from_str(&body).unwrap_or(Value::Null));
                let (status, reply) = script[i.min(script.len() - 1)];
                let _ = request.respond(tiny_http::Response::from_string(reply).with_status_code(status));
            }
        });
        let stopper = Arc::clone(&server);
        Mock {
            url,
            requests,
            stop: Box::new(move || stopper.unblock()),
            handle: Some(handle),
        }
    }

    fn client(&self, retries: u32) -> HttpGenerator {
        HttpGenerator::new(&self.url)
            .with_retries(retries)
            .with_backoff(Duration::from_millis(1))
            .with_timeout(Duration::from_secs(5))
    }

    fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for Mock {
    fn drop(&mut self) {
        (self.stop)();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[test]
fn generate_retries_after_server_error() {
    let mock = Mock::start(vec![(500, "boom"), (200, r#"{"text":"牛奶中铅含量为0.05 mg/kg。"}"#)]);
    let fields = IndexMap::from([("食品".to_string(), "牛奶".to_string())]);
    let text = mock.client(3).generate(&fields, 0.7, 42).unwrap();
    assert_eq!(text, "牛奶中铅含量为0.05 mg/kg。");
    let requests = mock.requests();
    assert_eq!(requests.len(), 2);
    assert_eq!(requests[0]["task"], "generate");
    assert_eq!(requests[0]["fields"]["食品"], "牛奶");
    assert_eq!(requests[0]["temperature"], 0.7);
    assert_eq!(requests[0]["seed"], 42);
}

#[test]
fn malformed_body_is_retried() {
    let mock = Mock::start(vec![(200, "not json"), (200, r#"{"ppl": 12.5}"#)]);
    assert_eq!(mock.client(1).perplexity("句子").unwrap(), 12.5);
    assert_eq!(mock.requests().len(), 2);
}

#[test]
fn missing_field_counts_as_malformed() {
    let mock = Mock::start(vec![(200, r#"{"ppl": 3.0}"#)]);
    let err = mock
        .client(0)
        .call(&WireRequest::Answer {
            instruction: "q".into(),
            seed: 1,
        })
        .unwrap_err();
    match err {
        GeneratorError::Exhausted { attempts: 1, last } => assert!(matches!(*last, GeneratorError::Malformed(_))),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn retries_are_bounded() {
    let mock = Mock::start(vec![(503, "")]);
    let err = mock.client(2).perplexity("x").unwrap_err();
    assert_eq!(
        err,
        GeneratorError::Exhausted {
            attempts: 3,
            last: Box::new(GeneratorError::Status(503)),
        }
    );
    assert_eq!(mock.requests().len(), 3);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let client = HttpGenerator::new("http://127.0.0.1:9/generate")
        .with_retries(0)
        .with_timeout(Duration::from_secs(2));
    match client.perplexity("x").unwrap_err() {
        GeneratorError::Exhausted { last, .. } => assert!(matches!(*last, GeneratorError::Transport(_))),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn wire_extractor_uses_endpoint_names() {
    let mock = Mock::start(vec![(
        200,
        r#"{"names":[{"raw":"GB 2762-2017","title":"食品中污染物限量","confidence":0.9,"position":0},
                     {"raw":"GB 9999-2000","confidence":1.0,"position":0}]}"#,
    )]);
    let text = "本文件依据GB 2762-2017食品中污染物限量编写。";
    let name = extract_document_name(text, &WireExtractor::new(mock.client(0))).unwrap().unwrap();
    assert_eq!(name.raw, "GB 2762-2017");
    assert_eq!(name.position, 5);
    assert_eq!(mock.requests()[0]["task"], "extract_name");
}

#[test]
fn external_scorer_reads_ppl() {
    let mock = Mock::start(vec![(200, r#"{"ppl": 7.25}"#), (200, r#"{"ppl": -1}"#)]);
    let scorer = ExternalScorer::new(mock.client(0));
    assert_eq!(scorer.score("称取试样。").unwrap(), 7.25);
    assert!(matches!(scorer.score("再来一句。"), Err(ScoreError::Generator(_))));
    assert!(matches!(scorer.score("  "), Err(ScoreError::Unscoreable(_))));
    assert_eq!(mock.requests()[0]["task"], "perplexity");
}
