//! Deterministic synthetic datasets for tests, demos and benchmarks.
//!
//! The FAQ generator builds a vocabulary-mismatch collection: each question
//! uses request-side words, its relevant answer uses disjoint answer-side
//! words, and the two sides only meet through the (question, answer) pair
//! documents a projection model is fitted on. Term-overlap retrieval is
//! therefore weak on it while projection-based features separate it.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{collection_from_records, FaqCollection, FaqRecord};
use crate::cotrain::PartiallyLabeled;
use crate::error::Result;
use crate::ner::{encode_bilou, EntitySpan};

const QUESTION_FILLERS: [&str; 4] = ["como", "posso", "fazer", "agora"];
const ANSWER_FILLERS: [&str; 4] = ["acesse", "aplicativo", "depois", "confirme"];

/// JSON-lines rows for a separable FAQ collection of `n_questions`
/// questions, each with one relevant answer and one attached non-relevant
/// distractor row.
pub fn separable_faq_records(n_questions: usize, seed: u64) -> Vec<FaqRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_questions * 2);
    for i in 0..n_questions {
        let qf = QUESTION_FILLERS[rng.gen_range(0..QUESTION_FILLERS.len())];
        let af = ANSWER_FILLERS[rng.gen_range(0..ANSWER_FILLERS.len())];
        let question = format!("{qf} pedido{i} consulta{i} assunto{i}");
        let answer = format!("{af} opcao{i} recurso{i} etapa{i}");
        let distractor = format!("aviso{i} nota{i} comunicado{i} informativo{i}");
        records.push(FaqRecord {
            q_id: i as i64,
            question: question.clone(),
            doc_id: (2 * i) as i64,
            answer,
            label: 1,
        });
        records.push(FaqRecord {
            q_id: i as i64,
            question,
            doc_id: (2 * i + 1) as i64,
            answer: distractor,
            label: 0,
        });
    }
    records
}

/// The collection behind [`separable_faq_records`].
pub fn separable_faq(n_questions: usize, seed: u64) -> Result<FaqCollection> {
    collection_from_records(&separable_faq_records(n_questions, seed))
}

fn sample_normal(rng: &mut ChaCha8Rng, std_dev: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    std_dev * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Gaussian class blobs replicated redundantly in two four-column views.
/// Returns the partially labeled set (first `n_labeled` rows labeled,
/// balanced over classes) plus the generator truth for every row.
pub fn two_view_blobs(
    n_labeled: usize,
    n_unlabeled: usize,
    n_classes: usize,
    seed: u64,
) -> (PartiallyLabeled, Vec<usize>) {
    let dims_per_view = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n_labeled + n_unlabeled;
    let mut x = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % n_classes;
        let mut row = Vec::with_capacity(2 * dims_per_view);
        for _view in 0..2 {
            for d in 0..dims_per_view {
                let center = if d % n_classes == class { 2.0 } else { -2.0 };
                row.push(center + sample_normal(&mut rng, 0.6));
            }
        }
        x.push(row);
        truth.push(class);
    }
    let y: Vec<Option<usize>> = (0..total)
        .map(|i| if i < n_labeled { Some(truth[i]) } else { None })
        .collect();
    let data = PartiallyLabeled::new(
        x,
        y,
        n_classes,
        (0..dims_per_view).collect(),
        (dims_per_view..2 * dims_per_view).collect(),
    )
    .expect("generator produces a valid partition");
    (data, truth)
}

// Entity phrases; every surface word appears in exactly one phrase at one
// position, so the token string uniquely determines its BILOU tag.
const NER_PHRASES: &[(&str, &[&str])] = &[
    ("PRODUTO", &["cartão", "platinum"]),
    ("PRODUTO", &["seguro", "residencial"]),
    ("PRODUTO", &["consórcio"]),
    ("PRODUTO", &["emprestimo", "consignado", "digital"]),
    ("ORG", &["banco", "central"]),
    ("ORG", &["receita", "federal"]),
    ("ORG", &["financeira"]),
    ("LOC", &["curitiba"]),
    ("LOC", &["porto", "alegre"]),
    ("LOC", &["belo", "horizonte"]),
    ("DOC", &["cpf"]),
    ("DOC", &["comprovante", "endereco"]),
];

const NER_FILLERS: [&str; 10] = [
    "o", "cliente", "enviou", "para", "consultar", "sobre", "ontem", "solicitou", "um", "novo",
];

pub const NER_CLASSES: [&str; 4] = ["PRODUTO", "ORG", "LOC", "DOC"];

/// Sentences whose tags are a function of the token string: fillers are
/// always `O` and each entity word occurs at a fixed phrase position.
pub fn ner_corpus(n_sentences: usize, seed: u64) -> (Vec<(Vec<String>, Vec<String>)>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let mut tokens: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        let lead = rng.gen_range(1..4usize);
        for _ in 0..lead {
            tokens.push(NER_FILLERS[rng.gen_range(0..NER_FILLERS.len())].to_string());
        }
        let n_entities = rng.gen_range(1..=2usize);
        for _ in 0..n_entities {
            let (class, words) = NER_PHRASES[rng.gen_range(0..NER_PHRASES.len())];
            let start = tokens.len();
            tokens.extend(words.iter().map(|w| w.to_string()));
            spans.push(EntitySpan::new(start, start + words.len(), class));
            let trail = rng.gen_range(1..3usize);
            for _ in 0..trail {
                tokens.push(NER_FILLERS[rng.gen_range(0..NER_FILLERS.len())].to_string());
            }
        }
        let tags = encode_bilou(tokens.len(), &spans).expect("spans are valid by construction");
        out.push((tokens, tags));
    }
    let classes = NER_CLASSES.iter().map(|c| c.to_string()).collect();
    (out, classes)
}

const SENTIMENT_WORDS: [(&str, &[&str]); 3] = [
    (
        "positivo",
        &[
            "obrigado",
            "excelente",
            "otimo",
            "maravilhoso",
            "adorei",
            "parabens",
            "agradeco",
            "perfeito",
        ],
    ),
    (
        "negativo",
        &[
            "pessimo",
            "horrivel",
            "reclamacao",
            "absurdo",
            "demora",
            "raiva",
            "cancelar",
            "revoltado",
        ],
    ),
    (
        "neutro",
        &[
            "consulta", "saldo", "extrato", "horario", "endereco", "telefone", "prazo", "boleto",
        ],
    ),
];

const SENTIMENT_FILLERS: [&str; 8] = [
    "o",
    "atendimento",
    "foi",
    "quero",
    "sobre",
    "minha",
    "conta",
    "servico",
];

/// `(text, label if revealed, generator truth)` rows; the first
/// `n_labeled_per_class` rows of each class carry their label.
pub fn sentiment_texts(
    n_labeled_per_class: usize,
    n_unlabeled: usize,
    seed: u64,
) -> Vec<(String, Option<String>, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let total = n_labeled_per_class * SENTIMENT_WORDS.len() + n_unlabeled;
    for i in 0..total {
        let class_idx = i % SENTIMENT_WORDS.len();
        let (label, words) = SENTIMENT_WORDS[class_idx];
        let mut tokens: Vec<&str> = Vec::new();
        tokens.push(SENTIMENT_FILLERS[rng.gen_range(0..SENTIMENT_FILLERS.len())]);
        let mut class_words = words.to_vec();
        class_words.shuffle(&mut rng);
        tokens.extend(class_words.iter().take(rng.gen_range(2..4usize)));
        tokens.push(SENTIMENT_FILLERS[rng.gen_range(0..SENTIMENT_FILLERS.len())]);
        let text = tokens.join(" ");
        let revealed = i < n_labeled_per_class * SENTIMENT_WORDS.len();
        rows.push((
            text,
            revealed.then(|| label.to_string()),
            label.to_string(),
        ));
    }
    rows
}

pub struct TokenizerCorpora {
    pub domain: Vec<String>,
    pub general: Vec<String>,
    pub heldout_domain: Vec<String>,
}

/// Fixed Portuguese corpora: a banking domain corpus, a general-domain
/// corpus with the same character set, and held-out banking text built
/// from the domain vocabulary.
pub fn tokenizer_corpora() -> TokenizerCorpora {
    let domain: Vec<String> = [
        "como consulto o saldo da minha conta corrente no aplicativo",
        "o pagamento da fatura do cartão de crédito venceu ontem",
        "quero aumentar o limite do cartão de crédito da conta",
        "a transferência entre contas do mesmo banco cai na hora",
        "o empréstimo consignado tem juros menores que o cheque especial",
        "como desbloquear o cartão de débito pelo aplicativo do banco",
        "a fatura do cartão fecha dia cinco e vence dia quinze",
        "o rendimento da poupança é creditado no aniversário da conta",
        "recebi uma cobrança indevida na fatura do cartão de crédito",
        "como cadastrar uma chave de pagamento instantâneo na conta",
        "o saldo devedor do empréstimo aparece no extrato mensal",
        "a anuidade do cartão pode ser parcelada em doze vezes",
        "quero contestar uma compra não reconhecida na fatura",
        "o seguro do cartão cobre compras feitas pela internet",
        "a portabilidade do salário para outro banco é gratuita",
        "como emitir a segunda via do boleto de cobrança vencido",
        "o comprovante da transferência fica salvo no aplicativo",
        "a conta digital não cobra tarifa de manutenção mensal",
        "os juros do rotativo do cartão são maiores que o parcelado",
        "posso antecipar as parcelas do empréstimo com desconto",
        "o cheque especial tem dez dias sem juros todo mês",
        "a senha do cartão é pedida em compras acima do limite",
        "como atualizar o limite de transferência diária da conta",
        "o extrato da poupança mostra o rendimento de cada mês",
        "a fatura digital chega por correio eletrônico todo mês",
        "quero cancelar o débito automático da conta de luz",
        "o banco envia aviso de vencimento da fatura pelo aplicativo",
        "a tarifa de saque é cobrada depois de quatro saques no mês",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let general: Vec<String> = [
        "a receita de bolo de cenoura leva três ovos e açúcar",
        "o jogo de futebol terminou empatado no estádio lotado",
        "a previsão indica chuva forte na região durante a semana",
        "o filme estreia no cinema do shopping na quinta feira",
        "a viagem de ônibus até o litoral dura quase cinco horas",
        "o museu abre de terça a domingo com entrada gratuita",
        "a feira de artesanato acontece na praça central da cidade",
        "o restaurante serve almoço executivo de segunda a sexta",
        "as crianças brincaram no parque durante toda a tarde",
        "a biblioteca municipal ampliou o horário de funcionamento",
        "o campeonato de vôlei reúne equipes de vários estados",
        "a peça de teatro ficará em cartaz até o fim do mês",
        "o trânsito na avenida principal está lento pela manhã",
        "a exposição de fotografia retrata paisagens do sertão",
        "o mercado vende frutas frescas colhidas na fazenda",
        "a orquestra apresenta um concerto gratuito no domingo",
        "o aeroporto registrou atrasos por causa da neblina",
        "a escola organizou uma gincana para arrecadar alimentos",
        "o parque nacional protege espécies raras de pássaros",
        "a padaria assa pão francês quentinho duas vezes ao dia",
        "o navio cruzeiro atraca no porto na manhã de sábado",
        "a chuva de granizo danificou telhados em três bairros",
        "o festival de inverno tem shows de jazz e música clássica",
        "a horta comunitária produz verduras sem agrotóxicos",
        "o instituto oferece curso gratuito de informática básica",
        "a maratona percorre as principais ruas do centro histórico",
        "o circo armou a lona no terreno ao lado do ginásio",
        "a cooperativa de reciclagem recolhe papel e vidro à tarde",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let heldout_domain: Vec<String> = [
        "o saldo da conta corrente aparece no extrato do aplicativo",
        "a fatura do cartão de crédito pode ser parcelada",
        "os juros do empréstimo consignado são menores",
        "a transferência entre contas do banco é gratuita",
        "como desbloquear o cartão de crédito pelo aplicativo",
        "o boleto de cobrança vence dia quinze do mês",
        "o rendimento da poupança é creditado no aniversário",
        "quero cancelar a anuidade do cartão de débito",
        "o comprovante do pagamento fica salvo no extrato",
        "a conta digital não cobra tarifa de manutenção mensal",
        "posso antecipar parcelas do empréstimo pelo banco",
        "o limite do cheque especial aparece no aplicativo",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    TokenizerCorpora {
        domain,
        general,
        heldout_domain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn faq_records_are_a_valid_collection() {
        let faq = separable_faq(50, 1).unwrap();
        assert_eq!(faq.n_questions(), 50);
        assert_eq!(faq.n_answers(), 100);
        for (q_id, _) in faq.questions() {
            assert_eq!(faq.relevant_docs(q_id), vec![2 * q_id]);
        }
    }

    #[test]
    fn faq_question_and_answer_content_words_are_disjoint() {
        let faq = separable_faq(20, 1).unwrap();
        let mut q_words: BTreeSet<String> = BTreeSet::new();
        let mut a_words: BTreeSet<String> = BTreeSet::new();
        for (_, text) in faq.questions() {
            q_words.extend(text.split_whitespace().map(str::to_string));
        }
        for (_, text) in faq.answers() {
            a_words.extend(text.split_whitespace().map(str::to_string));
        }
        assert!(q_words.is_disjoint(&a_words));
    }

    #[test]
    fn faq_generation_is_deterministic() {
        let a = separable_faq_records(10, 9);
        let b = separable_faq_records(10, 9);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.question, y.question);
            assert_eq!(x.answer, y.answer);
        }
    }

    #[test]
    fn blobs_have_balanced_labels_and_valid_views() {
        let (data, truth) = two_view_blobs(30, 70, 3, 5);
        assert_eq!(data.x.len(), 100);
        assert_eq!(truth.len(), 100);
        assert_eq!(data.y.iter().filter(|l| l.is_some()).count(), 30);
        for (label, t) in data.y.iter().zip(&truth) {
            if let Some(l) = label {
                assert_eq!(l, t);
            }
        }
    }

    #[test]
    fn ner_corpus_tags_are_a_function_of_the_token() {
        let (sentences, _) = ner_corpus(120, 7);
        let mut seen: std::collections::BTreeMap<String, String> = Default::default();
        for (tokens, tags) in &sentences {
            for (token, tag) in tokens.iter().zip(tags) {
                if let Some(prev) = seen.get(token) {
                    assert_eq!(prev, tag, "token {token} has two tags");
                } else {
                    seen.insert(token.clone(), tag.clone());
                }
            }
        }
    }

    #[test]
    fn sentiment_rows_reveal_only_the_requested_labels() {
        let rows = sentiment_texts(5, 30, 3);
        assert_eq!(rows.len(), 45);
        assert_eq!(rows.iter().filter(|(_, l, _)| l.is_some()).count(), 15);
        for (_, label, truth) in &rows {
            if let Some(l) = label {
                assert_eq!(l, truth);
            }
        }
    }

    #[test]
    fn corpora_character_sets_cover_the_heldout_text() {
        let c = tokenizer_corpora();
        let charset = |texts: &[String]| -> BTreeSet<char> {
            texts
                .iter()
                .flat_map(|t| crate::tokenizer::normalize(t).chars().collect::<Vec<_>>())
                .collect()
        };
        let heldout = charset(&c.heldout_domain);
        assert!(heldout.is_subset(&charset(&c.domain)));
        assert!(heldout.is_subset(&charset(&c.general)));
    }

    #[test]
    fn heldout_words_appear_in_the_domain_corpus() {
        let c = tokenizer_corpora();
        let domain_words: BTreeSet<String> = c
            .domain
            .iter()
            .flat_map(|t| {
                crate::tokenizer::normalize(t)
                    .split_whitespace()
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .collect();
        for text in &c.heldout_domain {
            for word in crate::tokenizer::normalize(text).split_whitespace() {
                assert!(
                    domain_words.contains(word),
                    "held-out word {word} missing from the domain corpus"
                );
            }
        }
    }
}
