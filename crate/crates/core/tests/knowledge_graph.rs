mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::oracles::compare_retrieval;
use common::{random_graph, random_query};
use foodcorpus::kg::{
    answer_query, assemble_prompt, build_graph, parse_query, retrieve, KgSchema, KnowledgeGraph, PromptTemplate,
    QueryServer, QuerySettings, Triple,
};
use foodcorpus::seed::stream;
use foodcorpus::structured::StructuredRecord;
use indexmap::IndexMap;
use rand::Rng;

#[test]
fn retrieval_matches_linear_scan() {
    for g in 0..20u64 {
        let graph = random_graph(g, 2_000);
        let mut rng = stream(g, &["kg-query"]);
        for _ in 0..20 {
            let limit = rng.gen_range(1..=12);
            compare_retrieval(&graph, &random_query(&mut rng), limit).unwrap();
        }
    }
}

#[test]
fn index_covers_every_triple() {
    let graph = random_graph(99, 3_000);
    for (id, t) in graph.triples().iter().enumerate() {
        assert!(graph.triples_for(&t.subject).contains(&id));
        assert!(graph.triples_for(&t.object).contains(&id));
    }
    let vocab: BTreeSet<&String> = graph.vocabulary().iter().collect();
    for t in graph.triples() {
        assert!(vocab.contains(&t.subject) && vocab.contains(&t.object));
    }
}

fn milk_graph() -> KnowledgeGraph {
    KnowledgeGraph::from_triples([
        Triple::new("牛奶", "限量[铅]", "0.05 mg/kg", "a"),
        Triple::new("面包", "限量[铅]", "0.1 mg/kg", "b"),
        Triple::new("牛奶", "检测项目", "铅", "c"),
        Triple::new("大米", "检测项目", "铅", "d"),
        Triple::new("牛奶粉", "检测项目", "汞", "e"),
    ])
}

#[test]
fn query_examples() {
    let graph = milk_graph();
    let parsed = parse_query("牛奶中铅的限量是多少", &graph);
    let spans: Vec<(&str, usize)> = parsed.entities.iter().map(|e| (e.entity.as_str(), e.start)).collect();
    assert_eq!(spans, vec![("牛奶", 0), ("铅", 3)]);
    assert!(parse_query("", &graph).entities.is_empty());
    assert_eq!(parse_query("牛奶粉标准", &graph).entities[0].entity, "牛奶粉");

    let only_milk = retrieve(&graph, &parse_query("牛奶", &graph), 8);
    assert!(only_milk.iter().all(|r| r.triple.subject == "牛奶"));
    assert!(retrieve(&graph, &parse_query("天气", &graph), 8).is_empty());

    let both = retrieve(&graph, &parse_query("牛奶 铅", &graph), 8);
    assert_eq!(both[0].triple, Triple::new("牛奶", "检测项目", "铅", "c"));
    assert_eq!(both[0].score, 2);
    assert!(both.iter().any(|r| r.triple.subject == "大米"));
}

#[test]
fn prompt_assembly() {
    let graph = milk_graph();
    let template = PromptTemplate::new("已知：\n{facts}\n问题：{query}").unwrap();
    let triples = retrieve(&graph, &parse_query("面包", &graph), 8);
    let bundle = assemble_prompt("面包", &triples, &template);
    assert!(bundle.prompt.contains("面包"));
    assert!(bundle.prompt.contains("0.1 mg/kg"));
    let empty = assemble_prompt("天气", &[], &template);
    assert_eq!(empty.facts, "");
    assert!(empty.prompt.ends_with("问题：天气"));
    let three = retrieve(&graph, &parse_query("牛奶 铅", &graph), 3);
    let bundle = assemble_prompt("q", &three, &template);
    assert_eq!(bundle.facts.lines().count(), 3);
    assert_eq!(bundle.triple_ids, three.iter().map(|r| r.id).collect::<Vec<_>>());
    assert!(PromptTemplate::new("no placeholders").is_err());
}

#[test]
fn records_become_deduplicated_triples() {
    let schema = KgSchema {
        subject_field: "食品".into(),
        predicates: IndexMap::from([
            ("检测项目".to_string(), "has_test_item".to_string()),
            ("限量".to_string(), "has_limit".to_string()),
        ]),
    };
    let r = StructuredRecord::new("1", [("食品", "牛奶"), ("检测项目", "铅"), ("限量", "0.05 mg/kg")]);
    let (graph, skipped) = build_graph(&[r.clone()], &schema);
    assert!(skipped.is_empty());
    assert_eq!(graph.len(), 2);
    let mut twin = r.clone();
    twin.record_id = "2".into();
    assert_eq!(build_graph(&[r, twin], &schema).0.len(), 2);
}

#[test]
fn triple_count_matches_flat_scan() {
    let mut rng = stream(4, &["records"]);
    let records: Vec<StructuredRecord> = (0..1000)
        .map(|i| {
            StructuredRecord::new(
                i.to_string(),
                [
                    ("食品", format!("食品{}", rng.gen_range(0..40))),
                    ("检测项目", format!("项目{}", rng.gen_range(0..30))),
                    ("限量", if rng.gen_bool(0.1) { String::new() } else { format!("{} mg/kg", rng.gen_range(0..5)) }),
                ],
            )
        })
        .collect();
    let schema = KgSchema {
        subject_field: "食品".into(),
        predicates: IndexMap::from([
            ("检测项目".to_string(), "检测项目".to_string()),
            ("限量".to_string(), "限量".to_string()),
        ]),
    };
    let mut flat = BTreeSet::new();
    for r in &records {
        for field in ["检测项目", "限量"] {
            let v = &r.fields[field];
            if !v.is_empty() {
                flat.insert((r.fields["食品"].clone(), field.to_string(), v.clone()));
            }
        }
    }
    assert_eq!(build_graph(&records, &schema).0.len(), flat.len());
}

#[test]
fn http_endpoint_answers_queries() {
    let graph = Arc::new(milk_graph());
    let settings = QuerySettings::default();
    let server = QueryServer::bind("127.0.0.1:0", Arc::clone(&graph), settings.clone()).unwrap();
    let addr = server.local_addr().unwrap();
    let stop = server.shutdown_handle();
    let handle = std::thread::spawn(move || server.serve());

    let url = format!("http://{addr}/query");
    let mut response = ureq::post(&url)
        .send_json(serde_json::json!({"query": "牛奶中铅的限量是多少"}))
        .unwrap();
    let body: serde_json::Value = response.body_mut().read_json().unwrap();
    let direct = answer_query(&graph, "牛奶中铅的限量是多少", &settings);
    assert_eq!(body, serde_json::to_value(&direct).unwrap());

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let bad = agent.post(&url).send("not json").unwrap();
    assert_eq!(bad.status(), 400);
    let missing = agent.get(&format!("http://{addr}/nope")).call().unwrap();
    assert_eq!(missing.status(), 404);

    stop();
    handle.join().unwrap();
}
