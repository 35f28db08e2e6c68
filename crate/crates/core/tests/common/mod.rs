//! Shared fixtures: three seeded toy databases, an annotated question
//! corpus with complete links, and deterministic model backends.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rusqlite::Connection;
use sqlveil::eval::AnnotatedExample;
use sqlveil::gateway::{
    Backend, BackendProfile, MockTransport, RecordingTransport, Role, TemplateId, Trace,
};
use sqlveil::masking::symbolize_sql;
use sqlveil::model::{ReferenceLink, Target, ValueLink};
use sqlveil::schema::ingest_schema;
use sqlveil::sql::{MaskingMode, Pipeline};
use sqlveil::{DatabaseSchema, LinkingMap, NlQuestion};

pub const HOSPITAL_DDL: &str = "
CREATE TABLE Patients (pid INTEGER PRIMARY KEY, name TEXT, hiv_status INTEGER, diagnosis TEXT, treatment TEXT);
CREATE TABLE Hospital (hid INTEGER PRIMARY KEY, name TEXT, address TEXT);
CREATE TABLE Admissions (aid INTEGER PRIMARY KEY, pid INTEGER REFERENCES Patients(pid),
                         hid INTEGER REFERENCES Hospital(hid), date DATE);
INSERT INTO Patients VALUES
  (1, 'Alice Moore', 1, 'flu', 'rest'), (2, 'Bob Stone', 1, 'asthma', 'inhaler'),
  (3, 'Carol King', 0, 'flu', 'rest'), (4, 'Dan Wu', 1, 'fracture', 'cast'),
  (5, 'Eve Park', 0, 'migraine', 'rest');
INSERT INTO Hospital VALUES (1, 'New York Hospital', '12 Main St'), (2, 'Boston General', '3 Elm St');
INSERT INTO Admissions VALUES
  (1, 1, 1, '2021-01-05'), (2, 2, 1, '2021-02-11'), (3, 3, 1, '2021-03-02'),
  (4, 4, 2, '2021-03-09'), (5, 5, 2, '2022-01-15'), (6, 1, 2, '2022-05-20');
";

pub const SHOP_DDL: &str = "
CREATE TABLE Customers (cid INTEGER PRIMARY KEY, full_name TEXT, city TEXT, segment TEXT);
CREATE TABLE Products (prod_id INTEGER PRIMARY KEY, title TEXT, category TEXT, price REAL);
CREATE TABLE Orders (order_id INTEGER PRIMARY KEY, cid INTEGER REFERENCES Customers(cid),
                     prod_id INTEGER REFERENCES Products(prod_id), quantity INTEGER, order_day TEXT);
INSERT INTO Customers VALUES
  (1, 'Ann Lee', 'Paris', 'retail'), (2, 'Omar Said', 'Lyon', 'wholesale'),
  (3, 'Lena Fox', 'Paris', 'retail'), (4, 'Ravi Das', 'Nice', 'retail');
INSERT INTO Products VALUES
  (1, 'Desk Lamp', 'lighting', 25.5), (2, 'Oak Chair', 'furniture', 80.0),
  (3, 'Floor Lamp', 'lighting', 49.99), (4, 'Bookcase', 'furniture', 120.0);
INSERT INTO Orders VALUES
  (1, 1, 1, 2, '2023-01-02'), (2, 1, 2, 1, '2023-01-05'), (3, 2, 4, 3, '2023-02-10'),
  (4, 3, 3, 1, '2023-02-11'), (5, 4, 1, 5, '2023-03-01'), (6, 3, 2, 2, '2023-03-07');
";

pub const SCHOOL_DDL: &str = "
CREATE TABLE Students (student_id INTEGER PRIMARY KEY, first_name TEXT, last_name TEXT, major TEXT, gpa REAL);
CREATE TABLE Courses (course_id INTEGER PRIMARY KEY, course_title TEXT, dept TEXT, credits INTEGER);
CREATE TABLE Enrollments (enroll_id INTEGER PRIMARY KEY, student_id INTEGER REFERENCES Students(student_id),
                          course_id INTEGER REFERENCES Courses(course_id), grade TEXT);
INSERT INTO Students VALUES
  (1, 'Maya', 'Chen', 'Physics', 3.8), (2, 'Liam', 'Ortiz', 'History', 3.1),
  (3, 'Zoe', 'Grant', 'Physics', 3.5), (4, 'Noah', 'Patel', 'Biology', 2.9);
INSERT INTO Courses VALUES
  (1, 'Quantum Mechanics', 'PHY', 4), (2, 'World Wars', 'HIS', 3), (3, 'Genetics', 'BIO', 4), (4, 'Optics', 'PHY', 3);
INSERT INTO Enrollments VALUES
  (1, 1, 1, 'A'), (2, 1, 4, 'B'), (3, 2, 2, 'A'), (4, 3, 1, 'B'), (5, 3, 4, 'A'), (6, 4, 3, 'C');
";

pub const DATABASES: [(&str, &str); 3] = [
    ("hospital", HOSPITAL_DDL),
    ("shop", SHOP_DDL),
    ("school", SCHOOL_DDL),
];

/// One annotated question. `values` pairs each literal span with its
/// `Table.column`; `refs` pairs each reference span with a table or
/// `Table.column`. Together they are the complete ground-truth links.
#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub db: &'static str,
    pub question: &'static str,
    pub values: &'static [(&'static str, &'static str)],
    pub refs: &'static [(&'static str, &'static str)],
    pub gold: &'static str,
}

impl Case {
    pub fn sensitive_tokens(&self) -> Vec<String> {
        self.refs
            .iter()
            .map(|r| r.0)
            .chain(self.values.iter().map(|v| v.0))
            .map(String::from)
            .collect()
    }

    /// Ground-truth links resolved against the question text.
    pub fn links(&self) -> LinkingMap {
        let q = NlQuestion::new(self.question);
        let span = |text: &str| {
            *q.find(text)
                .first()
                .unwrap_or_else(|| panic!("{text:?} not found in {:?}", self.question))
        };
        let values = self
            .values
            .iter()
            .map(|(text, col)| {
                let (t, c) = col.split_once('.').expect("value column is Table.column");
                ValueLink {
                    span: span(text),
                    literal: text.to_string(),
                    column: Some((t.to_string(), c.to_string())),
                }
            })
            .collect();
        let refs = self
            .refs
            .iter()
            .map(|(text, target)| ReferenceLink {
                span: span(text),
                target: match target.split_once('.') {
                    Some((t, c)) => Target::column(t, c),
                    None => Target::table(*target),
                },
            })
            .collect();
        LinkingMap::new(values, refs, Vec::new())
    }
}

/// The running example over the hospital schema; the gold query compares the integer
/// status column with 1, not with the question's word "positive".
pub const RUNNING_EXAMPLE: Case = Case {
    db: "hospital",
    question: "How many patients did the New York Hospital admit with HIV status as positive?",
    values: &[
        ("New York Hospital", "Hospital.name"),
        ("positive", "Patients.hiv_status"),
    ],
    refs: &[
        ("patients", "Patients"),
        ("admit", "Admissions"),
        ("HIV status", "Patients.hiv_status"),
    ],
    gold:
        "SELECT count(Patients.pid) FROM Patients JOIN Admissions ON Patients.pid = Admissions.pid \
           JOIN Hospital ON Admissions.hid = Hospital.hid \
           WHERE Hospital.name = 'New York Hospital' AND Patients.hiv_status = 1",
};

/// Abstract SQL as the untrusted model writes it for the running example: the status
/// literal is the masked word, which matches no row until corrected.
pub const RUNNING_EXAMPLE_MODEL_SQL: &str =
    "SELECT count(T1.C1) FROM T1 JOIN T3 ON T1.C1 = T3.C10 \
     JOIN T2 ON T3.C11 = T2.C6 WHERE T2.C7 = 'V1' AND T1.C3 = 'V2'";

pub const CASES: [Case; 24] = [
    RUNNING_EXAMPLE,
    Case {
        db: "hospital",
        question: "What is the diagnosis of Alice Moore?",
        values: &[("Alice Moore", "Patients.name")],
        refs: &[("diagnosis", "Patients.diagnosis")],
        gold: "SELECT diagnosis FROM Patients WHERE name = 'Alice Moore'",
    },
    Case {
        db: "hospital",
        question: "List the treatment of patients diagnosed with flu.",
        values: &[("flu", "Patients.diagnosis")],
        refs: &[("treatment", "Patients.treatment"), ("patients", "Patients")],
        gold: "SELECT treatment FROM Patients WHERE diagnosis = 'flu'",
    },
    Case {
        db: "hospital",
        question: "Give the address of Boston General.",
        values: &[("Boston General", "Hospital.name")],
        refs: &[("address", "Hospital.address")],
        gold: "SELECT address FROM Hospital WHERE name = 'Boston General'",
    },
    Case {
        db: "hospital",
        question: "How many admissions happened at Boston General?",
        values: &[("Boston General", "Hospital.name")],
        refs: &[("admissions", "Admissions")],
        gold: "SELECT count(*) FROM Admissions JOIN Hospital ON Admissions.hid = Hospital.hid \
               WHERE Hospital.name = 'Boston General'",
    },
    Case {
        db: "hospital",
        question: "Which patients were admitted on 2021-03-09?",
        values: &[("2021-03-09", "Admissions.date")],
        refs: &[("patients", "Patients"), ("admitted", "Admissions")],
        gold: "SELECT Patients.name FROM Patients JOIN Admissions ON Patients.pid = Admissions.pid \
               WHERE Admissions.date = '2021-03-09'",
    },
    Case {
        db: "hospital",
        question: "What is the name of the patient with treatment cast?",
        values: &[("cast", "Patients.treatment")],
        refs: &[("name", "Patients.name"), ("patient", "Patients"), ("treatment", "Patients.treatment")],
        gold: "SELECT name FROM Patients WHERE treatment = 'cast'",
    },
    Case {
        db: "hospital",
        question: "Count the patients with migraine.",
        values: &[("migraine", "Patients.diagnosis")],
        refs: &[("patients", "Patients")],
        gold: "SELECT count(*) FROM Patients WHERE diagnosis = 'migraine'",
    },
    Case {
        db: "shop",
        question: "How many customers live in Paris?",
        values: &[("Paris", "Customers.city")],
        refs: &[("customers", "Customers")],
        gold: "SELECT count(*) FROM Customers WHERE city = 'Paris'",
    },
    Case {
        db: "shop",
        question: "What is the price of the Oak Chair?",
        values: &[("Oak Chair", "Products.title")],
        refs: &[("price", "Products.price")],
        gold: "SELECT price FROM Products WHERE title = 'Oak Chair'",
    },
    Case {
        db: "shop",
        question: "List the title of products in the lighting category.",
        values: &[("lighting", "Products.category")],
        refs: &[("title", "Products.title"), ("products", "Products"), ("category", "Products.category")],
        gold: "SELECT title FROM Products WHERE category = 'lighting'",
    },
    Case {
        db: "shop",
        question: "What is the total quantity ordered by Ann Lee?",
        values: &[("Ann Lee", "Customers.full_name")],
        refs: &[("quantity", "Orders.quantity"), ("ordered", "Orders")],
        gold: "SELECT sum(Orders.quantity) FROM Orders JOIN Customers ON Orders.cid = Customers.cid \
               WHERE Customers.full_name = 'Ann Lee'",
    },
    Case {
        db: "shop",
        question: "Which city is Omar Said from?",
        values: &[("Omar Said", "Customers.full_name")],
        refs: &[("city", "Customers.city")],
        gold: "SELECT city FROM Customers WHERE full_name = 'Omar Said'",
    },
    Case {
        db: "shop",
        question: "How many orders contain furniture products?",
        values: &[("furniture", "Products.category")],
        refs: &[("orders", "Orders"), ("products", "Products")],
        gold: "SELECT count(*) FROM Orders JOIN Products ON Orders.prod_id = Products.prod_id \
               WHERE Products.category = 'furniture'",
    },
    Case {
        db: "shop",
        question: "Show the segment of customers who bought a Desk Lamp.",
        values: &[("Desk Lamp", "Products.title")],
        refs: &[("segment", "Customers.segment"), ("customers", "Customers"), ("bought", "Orders")],
        gold: "SELECT DISTINCT Customers.segment FROM Customers JOIN Orders ON Customers.cid = Orders.cid \
               JOIN Products ON Orders.prod_id = Products.prod_id WHERE Products.title = 'Desk Lamp'",
    },
    Case {
        db: "shop",
        question: "Count the products priced above 45.",
        values: &[("45", "Products.price")],
        refs: &[("products", "Products"), ("priced", "Products.price")],
        gold: "SELECT count(*) FROM Products WHERE price > 45",
    },
    Case {
        db: "school",
        question: "What is the gpa of Maya?",
        values: &[("Maya", "Students.first_name")],
        refs: &[("gpa", "Students.gpa")],
        gold: "SELECT gpa FROM Students WHERE first_name = 'Maya'",
    },
    Case {
        db: "school",
        question: "How many students major in Physics?",
        values: &[("Physics", "Students.major")],
        refs: &[("students", "Students"), ("major", "Students.major")],
        gold: "SELECT count(*) FROM Students WHERE major = 'Physics'",
    },
    Case {
        db: "school",
        question: "List the course title of courses worth 4 credits.",
        values: &[("4", "Courses.credits")],
        refs: &[("course title", "Courses.course_title"), ("courses", "Courses"), ("credits", "Courses.credits")],
        gold: "SELECT course_title FROM Courses WHERE credits = 4",
    },
    Case {
        db: "school",
        question: "Which students are enrolled in Optics?",
        values: &[("Optics", "Courses.course_title")],
        refs: &[("students", "Students"), ("enrolled", "Enrollments")],
        gold: "SELECT Students.first_name FROM Students \
               JOIN Enrollments ON Students.student_id = Enrollments.student_id \
               JOIN Courses ON Enrollments.course_id = Courses.course_id WHERE Courses.course_title = 'Optics'",
    },
    Case {
        db: "school",
        question: "What grade did Liam get in World Wars?",
        values: &[("Liam", "Students.first_name"), ("World Wars", "Courses.course_title")],
        refs: &[("grade", "Enrollments.grade")],
        gold: "SELECT Enrollments.grade FROM Enrollments \
               JOIN Students ON Enrollments.student_id = Students.student_id \
               JOIN Courses ON Enrollments.course_id = Courses.course_id \
               WHERE Students.first_name = 'Liam' AND Courses.course_title = 'World Wars'",
    },
    Case {
        db: "school",
        question: "Give the last name of students with gpa above 3.4.",
        values: &[("3.4", "Students.gpa")],
        refs: &[("last name", "Students.last_name"), ("students", "Students"), ("gpa", "Students.gpa")],
        gold: "SELECT last_name FROM Students WHERE gpa > 3.4",
    },
    Case {
        db: "school",
        question: "Which dept offers Genetics?",
        values: &[("Genetics", "Courses.course_title")],
        refs: &[("dept", "Courses.dept")],
        gold: "SELECT dept FROM Courses WHERE course_title = 'Genetics'",
    },
    Case {
        db: "school",
        question: "How many enrollments does Zoe have?",
        values: &[("Zoe", "Students.first_name")],
        refs: &[("enrollments", "Enrollments")],
        gold: "SELECT count(*) FROM Enrollments JOIN Students ON Enrollments.student_id = Students.student_id \
               WHERE Students.first_name = 'Zoe'",
    },
];

/// Seeded databases in a temporary directory, named `<db>.sqlite`.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub schemas: HashMap<&'static str, DatabaseSchema>,
}

impl Fixture {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut schemas = HashMap::new();
        for (name, ddl) in DATABASES {
            let path = dir.path().join(format!("{name}.sqlite"));
            Connection::open(&path)
                .and_then(|c| c.execute_batch(ddl))
                .expect("seed database");
            schemas.insert(name, ingest_schema(&path).expect("ingest"));
        }
        Fixture { dir, schemas }
    }

    pub fn db_dir(&self) -> &Path {
        self.dir.path()
    }

    pub fn db(&self, name: &str) -> PathBuf {
        self.dir.path().join(format!("{name}.sqlite"))
    }

    pub fn schema(&self, name: &str) -> &DatabaseSchema {
        &self.schemas[name]
    }

    /// The corpus as benchmark examples.
    pub fn corpus(&self) -> Vec<AnnotatedExample> {
        CASES
            .iter()
            .map(|c| AnnotatedExample {
                question: c.question.to_string(),
                gold_sql: c.gold.to_string(),
                db_id: c.db.to_string(),
                evidence: None,
                gt_sensitive_tokens: c.sensitive_tokens(),
            })
            .collect()
    }
}

pub fn profile(role: Role) -> BackendProfile {
    let mut p = BackendProfile::new(role, "mock://", "mock");
    p.max_retries = 0;
    p.backoff = Duration::ZERO;
    p
}

pub fn backend(role: Role, transport: MockTransport) -> Backend {
    Backend::new(profile(role), Arc::new(transport))
}

fn case_for(question: &str) -> Option<&'static Case> {
    CASES.iter().find(|c| c.question == question)
}

fn sql_binding(prompt: &sqlveil::gateway::RenderedPrompt) -> String {
    prompt.binding("sql").unwrap_or_default().to_string()
}

/// How the trusted mock answers the two repair prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrustedBehaviour {
    /// Concrete correction turns `hiv_status = 'positive'` into `= 1`;
    /// otherwise it echoes.
    pub fix_status_literal: bool,
}

/// Trusted model answering linking prompts from the annotations, echoing
/// model-unmask prompts unchanged, and echoing (or fixing) concrete SQL.
pub fn trusted_mock(behaviour: TrustedBehaviour) -> MockTransport {
    MockTransport::new().with_responder(move |prompt| {
        let case = prompt.binding("question").and_then(case_for);
        match prompt.template {
            TemplateId::DetectValues => Some(match case {
                Some(c) if !c.values.is_empty() => {
                    c.values.iter().map(|v| v.0).collect::<Vec<_>>().join("\n")
                }
                _ => "NONE".to_string(),
            }),
            TemplateId::LinkValues => {
                let c = case?;
                Some(
                    c.values
                        .iter()
                        .map(|(t, col)| format!("{t} -> {col}"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                )
            }
            TemplateId::LinkReferences => {
                let c = case?;
                Some(
                    c.refs
                        .iter()
                        .map(|(t, target)| format!("{t} -> {target}"))
                        .collect::<Vec<_>>()
                        .join("\n"),
                )
            }
            TemplateId::ClassifyToken => Some("NONE".to_string()),
            TemplateId::ModelUnmask => Some(sql_binding(prompt)),
            TemplateId::ConcreteCorrection => {
                let sql = sql_binding(prompt);
                Some(if behaviour.fix_status_literal {
                    sql.replace("hiv_status = 'positive'", "hiv_status = 1")
                } else {
                    sql
                })
            }
            _ => None,
        }
    })
}

/// Untrusted model that answers generation prompts from a table keyed by
/// the masked question it is shown and echoes correction prompts.
pub fn untrusted_mock(answers: HashMap<String, String>) -> MockTransport {
    MockTransport::new().with_responder(move |prompt| match prompt.template {
        TemplateId::SqlGeneration => answers.get(prompt.binding("NL_QUESTION")?).cloned(),
        TemplateId::AbstractCorrection => Some(sql_binding(prompt)),
        _ => None,
    })
}

/// Options for building a fixture pipeline.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: sqlveil::PipelineConfig,
    pub policy: sqlveil::PrivacyPolicy,
    pub trusted: TrustedBehaviour,
    /// Answer the running example with [`RUNNING_EXAMPLE_MODEL_SQL`] instead of its
    /// symbolized gold query.
    pub model_sql_for_running_example: bool,
}

impl Default for Setup {
    fn default() -> Self {
        Setup {
            config: sqlveil::PipelineConfig::default(),
            policy: sqlveil::PrivacyPolicy::full(),
            trusted: TrustedBehaviour {
                fix_status_literal: false,
            },
            model_sql_for_running_example: false,
        }
    }
}

/// A pipeline whose trusted model links perfectly and whose untrusted
/// model returns the gold query written over the symbols it was shown.
/// The untrusted transport records every prompt it receives.
pub fn perfect_pipeline(
    fixture: &Fixture,
    setup: &Setup,
) -> (Pipeline, Arc<RecordingTransport<MockTransport>>) {
    let trusted = backend(Role::TrustedSlm, trusted_mock(setup.trusted));
    let mut pipeline = Pipeline::new(backend(Role::UntrustedLlm, MockTransport::new()));
    pipeline.config = setup.config.clone();
    pipeline.policy = setup.policy.clone();
    pipeline.trusted = Some(trusted);

    let mut answers = HashMap::new();
    for case in CASES.iter() {
        let q = NlQuestion::new(case.question);
        let abstraction = pipeline.abstraction(
            &q,
            fixture.schema(case.db),
            &MaskingMode::Policy,
            &Trace::new(),
        );
        let sql =
            if setup.model_sql_for_running_example && case.question == RUNNING_EXAMPLE.question {
                RUNNING_EXAMPLE_MODEL_SQL.to_string()
            } else {
                symbolize_sql(case.gold, &abstraction.bundle.symbol_table)
            };
        answers.insert(abstraction.bundle.prompt_question(), sql);
    }
    let recorder = Arc::new(RecordingTransport::new(untrusted_mock(answers)));
    pipeline.untrusted = Backend::new(profile(Role::UntrustedLlm), recorder.clone());
    (pipeline, recorder)
}
