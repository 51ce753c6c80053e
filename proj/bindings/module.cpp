#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <set>

#include "mabdqa/bandit.hpp"
#include "mabdqa/gateway.hpp"
#include "mabdqa/metrics.hpp"
#include "mabdqa/pipeline.hpp"
#include "mabdqa/synth.hpp"

namespace py = pybind11;
using namespace mabdqa;

namespace {

MultiVectorEmbedding to_embedding(const py::array_t<float, py::array::c_style |
                                                               py::array::forcecast>& array) {
    if (array.ndim() != 2) {
        throw ContractError("embedding arrays must be 2-D (vectors x dim)");
    }
    const auto rows = static_cast<std::size_t>(array.shape(0));
    const auto cols = static_cast<std::size_t>(array.shape(1));
    MultiVectorEmbedding e(rows, cols);
    const float* data = array.data();
    for (std::size_t i = 0; i < rows * cols; ++i) {
        e.at(i / cols, i % cols) = data[i];
    }
    return e;
}

py::array_t<float> from_embedding(const MultiVectorEmbedding& e) {
    py::array_t<float> out({e.count(), e.dim()});
    float* data = out.mutable_data();
    for (std::size_t i = 0; i < e.count(); ++i) {
        for (std::size_t j = 0; j < e.dim(); ++j) data[i * e.dim() + j] = e.at(i, j);
    }
    return out;
}

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_mabdqa, m) {
    m.doc() = "Bandit-guided multi-page document retrieval core";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    // Late-interaction scoring.
    m.def(
        "late_interaction",
        [](const FloatArray& q, const FloatArray& p) {
            return late_interaction(to_embedding(q), to_embedding(p));
        },
        py::arg("query"), py::arg("page"),
        "Sum over query vectors of the max dot product against page vectors");
    m.def(
        "normalized_li",
        [](const FloatArray& q, const FloatArray& p) {
            return normalized_li(to_embedding(q), to_embedding(p));
        },
        py::arg("query"), py::arg("page"));
    m.def(
        "page_similarity",
        [](const FloatArray& a, const FloatArray& b) {
            return pooled_similarity(to_embedding(a), to_embedding(b));
        },
        py::arg("a"), py::arg("b"), "Mean-pooled, L2-normalized dot product in [-1, 1]");
    m.def(
        "similarity_map",
        [](const FloatArray& q, const FloatArray& p) {
            return export_similarity_map(to_embedding(q), to_embedding(p));
        },
        py::arg("query"), py::arg("page"), "Per page vector: max dot over query vectors");

    // Embedding index.
    py::class_<EmbeddingIndex>(m, "EmbeddingIndex")
        .def(py::init<>())
        .def_property_readonly("dim", &EmbeddingIndex::dim)
        .def("__len__", &EmbeddingIndex::size)
        .def("page_ids",
             [](const EmbeddingIndex& index) {
                 std::vector<std::string> ids;
                 for (const auto& page : index.pages()) ids.push_back(page.page_id);
                 return ids;
             })
        .def(
            "add_page",
            [](EmbeddingIndex& index, const std::string& page_id, const std::string& doc_id,
               std::uint32_t page_number, const FloatArray& embedding) {
                index.add_page({doc_id, page_id, page_number, "", to_embedding(embedding)});
            },
            py::arg("page_id"), py::arg("doc_id"), py::arg("page_number"), py::arg("embedding"))
        .def("embedding_of",
             [](const EmbeddingIndex& index, const std::string& page_id) {
                 const PageRecord* page = index.find(page_id);
                 if (!page) throw ContractError("unknown page: " + page_id);
                 return from_embedding(page->embedding);
             })
        .def("save", [](const EmbeddingIndex& index, const std::string& path) {
            save_index(index, path);
        });
    m.def("load_index", &load_index, py::arg("path"));

    // Hyperedge filter.
    m.def(
        "build_hyperedge",
        [](const std::vector<std::string>& cj, const std::vector<std::string>& cb) {
            CandidateSet a, b;
            a.subquery_index = 1;
            a.page_ids = cj;
            b.subquery_index = 2;
            b.page_ids = cb;
            return build_hyperedge(a, b).members;
        },
        py::arg("candidates"), py::arg("global_candidates"),
        "Members of the filtered hyperedge, candidate order preserved");

    // Bandit arms.
    py::class_<ArmState>(m, "BetaArm")
        .def(py::init([](double alpha, double beta) { return ArmState{alpha, beta}; }),
             py::arg("alpha") = 1.0, py::arg("beta") = 1.0)
        .def_readwrite("alpha", &ArmState::alpha)
        .def_readwrite("beta", &ArmState::beta)
        .def("mean", [](const ArmState& arm) { return arm_mean(arm); })
        .def("update", [](ArmState& arm, double reward) {
            arm.alpha += reward;
            arm.beta += 1.0 - reward;
        });
    m.def("map_rating_to_reward", &map_rating_to_reward, py::arg("rating"));
    m.def(
        "thompson_winner",
        [](const std::vector<std::pair<double, double>>& arms, std::uint64_t seed) {
            BanditState bandit(arms.size(), seed);
            for (std::size_t i = 0; i < arms.size(); ++i) {
                bandit.arms[i] = {arms[i].first, arms[i].second};
            }
            const ArmSample sample = sample_arms(bandit);
            return py::make_tuple(sample.winner, sample.draws);
        },
        py::arg("arms"), py::arg("seed") = 42,
        "One Thompson draw per arm; returns (winner index, draws)");
    m.def(
        "composite_score",
        [](double li_norm, std::optional<double> vlm_reward, double degree_norm, double s_cb,
           double alpha, double beta, double lambda) {
            RetrievalParams params;
            params.alpha_mix = alpha;
            params.beta_mix = beta;
            params.lambda_mix = lambda;
            return composite_score(li_norm, vlm_reward, degree_norm, s_cb, params);
        },
        py::arg("li_norm"), py::arg("vlm_reward"), py::arg("degree_norm"), py::arg("s_cb"),
        py::arg("alpha") = 0.8, py::arg("beta") = 0.1, py::arg("lambda") = 0.75);

    // Retrieval metrics.
    m.def(
        "recall_at_k",
        [](const std::vector<std::string>& pred, const std::vector<std::string>& gt, int k) {
            return recall_at_k(pred, std::set<std::string>(gt.begin(), gt.end()), k);
        },
        py::arg("pred"), py::arg("gt"), py::arg("k"));
    m.def(
        "precision_at_k",
        [](const std::vector<std::string>& pred, const std::vector<std::string>& gt, int k) {
            return precision_at_k(pred, std::set<std::string>(gt.begin(), gt.end()), k);
        },
        py::arg("pred"), py::arg("gt"), py::arg("k"));
    m.def(
        "ndcg_at_k",
        [](const std::vector<std::string>& pred, const std::vector<std::string>& gt, int k) {
            return ndcg_at_k(pred, std::set<std::string>(gt.begin(), gt.end()), k);
        },
        py::arg("pred"), py::arg("gt"), py::arg("k"));
    m.def("mrr", &mrr, py::arg("first_relevant_ranks"),
          "Mean reciprocal rank; rank 0 marks a miss and contributes 0");

    // Deterministic mock embedding (offline smoke checks).
    m.def(
        "mock_embed",
        [](const std::string& text, std::uint64_t seed, std::uint32_t dim) {
            MockGateway mock(seed, dim);
            return from_embedding(mock.embed({{text, ""}}).front());
        },
        py::arg("text"), py::arg("seed") = 42, py::arg("dim") = 16);

    // Synthetic head-to-head comparison; returns the JSON report text.
    m.def(
        "simulate",
        [](int num_pages, int num_queries, int trials, int budget_m, std::uint64_t seed) {
            SyntheticCorpusSpec spec;
            spec.num_pages = num_pages;
            spec.num_queries = num_queries;
            spec.seed = seed;
            CompareOptions options;
            options.params.budget_m = budget_m;
            options.params.seed = seed;
            return comparison_to_json(compare_methods(spec, trials, options));
        },
        py::arg("num_pages") = 60, py::arg("num_queries") = 4, py::arg("trials") = 3,
        py::arg("budget_m") = 20, py::arg("seed") = 42);

    m.attr("__version__") = "0.1.0";
}
