//! Synthetic, seeded input corpus covering every source kind.
//!
//! Used by the test suites, the `make-fixture` command and the Python smoke
//! test. Everything is derived from one seed, so the same arguments always
//! produce the same bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use crate::seed::{stream, StreamRng};

/// Record fields dropped by the fixture config.
pub const FIXTURE_DENYLIST: [&str; 5] = ["样品编号", "送检单位", "联系人", "联系电话", "委托编号"];

/// Mobile-number pattern masked in free-text fields.
pub const PHONE_PATTERN: &str = r"1[3-9]\d{9}";

const RECORD_FIELDS: [&str; 14] = [
    "样品编号",
    "食品名称",
    "检测项目",
    "检测方法",
    "限量",
    "检测结果",
    "单位",
    "判定",
    "送检单位",
    "联系人",
    "联系电话",
    "委托编号",
    "检测日期",
    "备注",
];

const FOODS: [&str; 20] = [
    "牛奶", "奶粉", "面包", "大米", "小麦粉", "猪肉", "牛肉", "鸡蛋", "食用油", "酱油", "食醋", "茶叶", "蜂蜜", "果汁饮料",
    "水果罐头", "豆腐", "白酒", "啤酒", "婴幼儿谷类辅助食品", "巧克力",
];

const ITEMS: [&str; 20] = [
    "铅", "镉", "总汞", "总砷", "黄曲霉毒素B1", "苯甲酸", "山梨酸", "二氧化硫", "菌落总数", "大肠菌群", "沙门氏菌", "亚硝酸盐",
    "三聚氰胺", "甜蜜素", "糖精钠", "过氧化值", "酸价", "蛋白质", "脂肪", "水分",
];

const METHODS: [&str; 8] = [
    "石墨炉原子吸收光谱法",
    "电感耦合等离子体质谱法",
    "高效液相色谱法",
    "气相色谱法",
    "平板计数法",
    "酸碱滴定法",
    "紫外分光光度法",
    "液相色谱串联质谱法",
];

const SURNAMES: [&str; 12] = ["赵", "钱", "孙", "李", "周", "吴", "郑", "王", "冯", "陈", "褚", "卫"];
const GIVEN: [&str; 12] = ["晓岚", "子墨", "若溪", "景行", "沐阳", "书瑶", "嘉树", "云舒", "知远", "听澜", "望舒", "清和"];
const REGIONS: [&str; 8] = ["华北", "华东", "华南", "西南", "西北", "东北", "华中", "沿海"];

/// Sizes of each generated input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub documents: usize,
    pub records: usize,
    pub forum_questions: usize,
    pub seeds: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            documents: 100,
            records: 1000,
            forum_questions: 50,
            seeds: 10,
        }
    }
}

/// Where the fixture was written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureLayout {
    pub root: PathBuf,
    pub config: PathBuf,
    pub standard_documents: PathBuf,
    pub records: PathBuf,
    pub forum: PathBuf,
    pub seeds: PathBuf,
    pub triples: PathBuf,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty")
}

fn chinese_numeral(n: usize) -> String {
    const DIGITS: [&str; 10] = ["零", "一", "二", "三", "四", "五", "六", "七", "八", "九"];
    match n {
        0..=9 => DIGITS[n].to_string(),
        10 => "十".to_string(),
        11..=19 => format!("十{}", DIGITS[n - 10]),
        _ => {
            let tail = if n % 10 == 0 { String::new() } else { DIGITS[n % 10].to_string() };
            format!("{}十{tail}", DIGITS[n / 10])
        }
    }
}

fn body_sentence(rng: &mut StreamRng, food: &str, item: &str) -> String {
    let method = pick(rng, &METHODS);
    let mass: f64 = rng.gen_range(0.5..5.0);
    let limit: f64 = rng.gen_range(0.01..2.0);
    match rng.gen_range(0..12) {
        0 => format!("本标准规定了{food}中{item}的测定方法。"),
        1 => format!("本方法适用于{food}及其制品中{item}的测定。"),
        2 => format!("试样经消解处理后，采用{method}测定，外标法定量。"),
        3 => format!("称取试样{mass:.2}g，精确至0.001g，置于聚四氟乙烯消解罐中。"),
        4 => "按GB 2762-2022规定的限量要求执行。".to_string(),
        5 => format!("当{item}含量超过{limit:.2} mg/kg时，应重新取样复检。"),
        6 => format!("{item}的检出限为{:.3} mg/kg，定量限为{:.3} mg/kg。", limit / 10.0, limit / 3.0),
        7 => "实验用水应符合GB/T 6682-2008规定的一级水要求。".to_string(),
        8 => "所有玻璃器皿均需用硝酸溶液浸泡过夜，用水反复冲洗，最后用去离子水冲洗干净。".to_string(),
        9 => "在重复性条件下获得的两次独立测定结果的绝对差值不得超过算术平均值的百分之十。".to_string(),
        10 => format!("{food}样品应在四摄氏度以下避光保存，并在七日内完成检测。"),
        _ => format!("同时做试剂空白试验，以扣除{item}的背景干扰。"),
    }
}

fn garbage_line(rng: &mut StreamRng) -> String {
    const SYMBOLS: [&str; 16] = ["|", "┃", "▲", "△", "◆", "※", "¤", "§", "#", "~", "^", "Ⅲ", "╳", "◎", "¦", "•"];
    let mut line = String::new();
    for _ in 0..rng.gen_range(8..16) {
        if rng.gen_bool(0.5) {
            line.push_str(pick(rng, &SYMBOLS));
        } else {
            let _ = write!(line, "{}", rng.gen_range(0..1000));
        }
        line.push(if rng.gen_bool(0.3) { ' ' } else { 'l' });
    }
    line
}

const CHAPTER_TITLES: [&str; 8] = [
    "范围",
    "规范性引用文件",
    "原理",
    "试剂和材料",
    "仪器和设备",
    "分析步骤",
    "结果计算",
    "精密度",
];

/// One standard document; every tenth lacks a standard code.
fn standard_document(rng: &mut StreamRng, index: usize) -> String {
    let food = pick(rng, &FOODS);
    let item = pick(rng, &ITEMS);
    let mut text = String::new();
    if index % 10 != 7 {
        let year = 2010 + index % 14;
        let _ = writeln!(text, "GB 5009.{}-{year} 食品安全国家标准 {food}中{item}的测定", index + 1);
    } else {
        let _ = writeln!(text, "{food}中{item}检测作业指导书");
    }
    let _ = writeln!(text, "本标准由国家卫生健康委员会发布。");
    let chapters = rng.gen_range(3..8);
    let numeric = index % 2 == 0;
    for c in 0..chapters {
        let title = CHAPTER_TITLES[c % CHAPTER_TITLES.len()];
        if numeric {
            let _ = writeln!(text, "{} {title}", c + 1);
        } else {
            let _ = writeln!(text, "第{}章 {title}", chinese_numeral(c + 1));
        }
        for _ in 0..rng.gen_range(2..6) {
            let n = rng.gen_range(1..4);
            let line: String = (0..n).map(|_| body_sentence(rng, food, item)).collect();
            let _ = writeln!(text, "{line}");
        }
        if rng.gen_bool(0.4) {
            let _ = writeln!(text, "{}", garbage_line(rng));
        }
    }
    if rng.gen_bool(0.3) {
        let _ = writeln!(text, "附录A 检测记录表");
        let _ = writeln!(text, "{}", garbage_line(rng));
        let _ = writeln!(text, "记录表应由检测人员和复核人员分别签字确认。");
    }
    text
}

fn write(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}

fn person(rng: &mut StreamRng) -> String {
    format!("{}{}", pick(rng, &SURNAMES), pick(rng, &GIVEN))
}

fn records_csv(rng: &mut StreamRng, count: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_FIELDS).expect("in-memory write");
    for row in 0..count {
        let food = FOODS[row % FOODS.len()];
        let item = ITEMS[(row / FOODS.len()) % ITEMS.len()];
        let phone = format!("1{}{:09}", rng.gen_range(3..10), rng.gen_range(0..1_000_000_000u64));
        let limit = format!("{:.2}", rng.gen_range(0.01..2.0));
        let result = format!("{:.3}", rng.gen_range(0.0..2.5));
        let note = match row % 7 {
            0 => format!("复检请联系{phone}"),
            3 => "样品包装完好".to_string(),
            _ => String::new(),
        };
        let fields = [
            format!("SP2023{row:06}"),
            food.to_string(),
            item.to_string(),
            pick(rng, &METHODS).to_string(),
            limit,
            result,
            "mg/kg".to_string(),
            pick(rng, &["合格", "不合格"]).to_string(),
            format!("{}{:04}号食品厂", pick(rng, &REGIONS), rng.gen_range(0..10_000)),
            person(rng),
            phone,
            format!("WT-2023-{row:05}"),
            format!("2023-{:02}-{:02}", rng.gen_range(1..13), rng.gen_range(1..29)),
            note,
        ];
        w.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn forum_jsonl(rng: &mut StreamRng, questions: usize) -> String {
    let mut out = String::new();
    let mut post = 0;
    for q in 0..questions {
        let food = FOODS[q % FOODS.len()];
        let item = ITEMS[(q * 7 + q / FOODS.len()) % ITEMS.len()];
        let question = format!("{food}中{item}的限量标准是多少？第{}问", q + 1);
        for a in 0..rng.gen_range(1..4) {
            post += 1;
            let row = json!({
                "question_id": format!("q{q:03}"),
                "question_text": question,
                "answer_text": format!("根据GB 2762-2022，{food}中{item}应符合相应限量，检测可采用{}。（回答{}）", pick(rng, &METHODS), a + 1),
                "author_id": format!("u{:03}", rng.gen_range(0..40)),
                "author_post_count": rng.gen_range(0..200),
                "timestamp": 1_600_000_000 + post * 3600,
            });
            let _ = writeln!(out, "{row}");
        }
    }
    out
}

fn seeds_jsonl(count: usize) -> String {
    let mut out = String::new();
    for i in 0..count {
        let food = FOODS[i % FOODS.len()];
        let item = ITEMS[(i * 3) % ITEMS.len()];
        let row = json!({
            "instruction": format!("说明{food}中{item}的检测方法及限量要求（种子{}）", i + 1),
            "response": format!("{food}中{item}通常采用{}测定，限量应符合GB 2762-2022。", METHODS[i % METHODS.len()]),
        });
        let _ = writeln!(out, "{row}");
    }
    out
}

fn triples_jsonl() -> String {
    let mut out = String::new();
    for (i, item) in ITEMS.iter().enumerate() {
        let row = json!({
            "s": item,
            "p": "常用检测方法",
            "o": METHODS[i % METHODS.len()],
            "provenance": "text:tutorial",
        });
        let _ = writeln!(out, "{row}");
    }
    out
}

fn auxiliary(root: &Path, rng: &mut StreamRng) -> std::io::Result<()> {
    let mut dict = String::new();
    for (i, item) in ITEMS.iter().enumerate() {
        let _ = writeln!(dict, "{item}：食品检测中常见的检测项目之一，常用{}测定。", METHODS[i % METHODS.len()]);
    }
    dict.push_str("缺少分隔符的词条\n");
    write(&root.join("dictionary/terms.txt"), &dict)?;

    for t in 0..3 {
        let paragraphs: Vec<String> = (0..4)
            .map(|_| {
                let food = pick(rng, &FOODS);
                let item = pick(rng, &ITEMS);
                format!("{}{}", body_sentence(rng, food, item), body_sentence(rng, food, item))
            })
            .collect();
        write(&root.join(format!("tutorial/lesson{t}.txt")), &paragraphs.join("\n\n"))?;
    }
    for n in 0..5 {
        let food = pick(rng, &FOODS);
        let item = pick(rng, &ITEMS);
        let text = format!(
            "市场监管部门近日抽检{food}样品，其中部分批次{item}超标。专家提醒消费者通过正规渠道购买。（新闻{}）\n",
            n + 1
        );
        write(&root.join(format!("sentiment_news/news{n}.txt")), &text)?;
    }
    for l in 0..2 {
        let mut text = String::from("中华人民共和国食品安全法（节选）\n");
        for a in 1..=6 {
            let _ = writeln!(
                text,
                "第{}条 食品生产经营者应当依照法律、法规和食品安全标准从事生产经营活动。（{}{}）",
                chinese_numeral(a + l * 6),
                l,
                a
            );
        }
        write(&root.join(format!("law/law{l}.txt")), &text)?;
    }
    for e in 0..2 {
        let mut text = String::new();
        for q in 1..=5 {
            let item = ITEMS[(q + e * 5) % ITEMS.len()];
            let method = METHODS[q % METHODS.len()];
            let _ = writeln!(text, "{q}. 测定{item}常用的方法是？");
            let _ = writeln!(text, "A. {method} B. 感官评价");
            let _ = writeln!(text, "答案：A");
            let _ = writeln!(text, "解析：{item}通常采用{method}。（试卷{e}）");
        }
        write(&root.join(format!("exam_question/exam{e}.txt")), &text)?;
    }
    Ok(())
}

fn config_toml(seed: u64) -> String {
    let denylist: Vec<String> = FIXTURE_DENYLIST.iter().map(|f| format!("\"{f}\"")).collect();
    format!(
        r#"seed = {seed}
output_dir = "out"

[inputs]
standard_documents = "standard_documents"
dictionary = "dictionary"
tutorial = "tutorial"
sentiment_news = "sentiment_news"
law = "law"
exam_question = "exam_question"
structured = ["records.csv"]
forum = "forum.jsonl"
seeds = "seeds.jsonl"
triples = "triples.jsonl"

[redaction]
denylist = [{}]
value_patterns = ['{PHONE_PATTERN}']

[[merge]]
sources = ["检测结果", "单位"]
target = "检测结果"

[datav1]
group_fields = ["食品名称"]
testing_item_key = "检测项目"

[kg]
subject_field = "食品名称"

[kg.predicates]
"检测项目" = "检测项目"
"检测方法" = "检测方法"
"限量" = "限量"
"#,
        denylist.join(", ")
    )
}

/// Write the fixture under `root` with a `config.toml` that references
/// every input by relative path.
pub fn write_fixture(root: &Path, spec: &FixtureSpec, seed: u64) -> std::io::Result<FixtureLayout> {
    let mut rng = stream(seed, &["fixture"]);
    let docs = root.join("standard_documents");
    std::fs::create_dir_all(&docs)?;
    for i in 0..spec.documents {
        let mut doc_rng = stream(seed, &["fixture", "document", &i.to_string()]);
        write(&docs.join(format!("std_{i:03}.txt")), &standard_document(&mut doc_rng, i))?;
    }
    auxiliary(root, &mut rng)?;
    let layout = FixtureLayout {
        root: root.to_path_buf(),
        config: root.join("config.toml"),
        standard_documents: docs,
        records: root.join("records.csv"),
        forum: root.join("forum.jsonl"),
        seeds: root.join("seeds.jsonl"),
        triples: root.join("triples.jsonl"),
    };
    write(&layout.records, &records_csv(&mut rng, spec.records))?;
    write(&layout.forum, &forum_jsonl(&mut rng, spec.forum_questions))?;
    write(&layout.seeds, &seeds_jsonl(spec.seeds))?;
    write(&layout.triples, &triples_jsonl())?;
    write(&layout.config, &config_toml(seed))?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::validate_config;

    #[test]
    fn numerals() {
        assert_eq!(chinese_numeral(1), "一");
        assert_eq!(chinese_numeral(10), "十");
        assert_eq!(chinese_numeral(12), "十二");
        assert_eq!(chinese_numeral(20), "二十");
        assert_eq!(chinese_numeral(21), "二十一");
    }

    #[test]
    fn fixture_config_validates() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            documents: 3,
            records: 10,
            forum_questions: 2,
            seeds: 2,
        };
        let layout = write_fixture(dir.path(), &spec, 5).unwrap();
        let config = validate_config(&layout.config).unwrap();
        assert_eq!(config.seed, Some(5));
        assert_eq!(config.output_dir, dir.path().join("out"));
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = FixtureSpec {
            documents: 4,
            records: 20,
            forum_questions: 3,
            seeds: 2,
        };
        write_fixture(a.path(), &spec, 9).unwrap();
        write_fixture(b.path(), &spec, 9).unwrap();
        for rel in ["standard_documents/std_002.txt", "records.csv", "forum.jsonl", "config.toml"] {
            assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap());
        }
    }
}
