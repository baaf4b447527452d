#pragma once

#include <string>
#include <vector>

#include "dla/page.hpp"
#include "dla/structdecode.hpp"
#include "dla/training.hpp"

namespace dla {

// Levenshtein distance with unit costs over integer symbol sequences.
int edit_distance(const std::vector<int>& a, const std::vector<int>& b);

enum class RedsKind { Text, Graphical };

// Reading Edit Distance Score for one document. Predicted regions are
// matched to ground truth greedily by union-box IoU >= 0.5; unmatched
// predictions become a null symbol. Empty versus empty scores 1.
double reds(const DocumentPage& pred, const DocumentPage& gt, RedsKind kind);

// Fraction of graphic-to-region links reproduced under the same matching.
double link_fraction(const DocumentPage& pred, const DocumentPage& gt);

struct RedsSummary {
    double text = 1.0;
    double graphical = 1.0;
    double links = 1.0;
};

RedsSummary reds_corpus(const std::vector<DocumentPage>& preds,
                        const std::vector<DocumentPage>& gts);

// Text-region grouping score. A predicted region counts as correct when its
// ordered member-line list equals that of some ground-truth text region.
struct GroupingF1 {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
};

GroupingF1 grouping_f1(const DocumentPage& pred, const DocumentPage& gt);

struct Detection {
    int image = 0;
    int category = 0;
    BBox box;
    double score = 1.0;
};

struct GroundTruthBox {
    int image = 0;
    int category = 0;
    BBox box;
};

struct MapResult {
    std::vector<double> per_class_ap;  // -1 marks classes absent from GT
    double map = 0.0;
};

std::vector<double> coco_thresholds();  // 0.50:0.05:0.95

// 101-point interpolated average precision per class per IoU threshold,
// averaged over thresholds; mAP averages classes present in ground truth.
MapResult coco_map(const std::vector<Detection>& preds, const std::vector<GroundTruthBox>& gts,
                   int num_classes, const std::vector<double>& thresholds = coco_thresholds());

// Segmentation variant: each instance is the union of its boxes, compared by
// rasterized mask IoU on a raster x raster grid.
struct MaskDetection {
    int image = 0;
    int category = 0;
    std::vector<BBox> boxes;
    double score = 1.0;
};

struct MaskGroundTruth {
    int image = 0;
    int category = 0;
    std::vector<BBox> boxes;
};

MapResult coco_map_segm(const std::vector<MaskDetection>& preds,
                        const std::vector<MaskGroundTruth>& gts, int num_classes,
                        int raster = 256,
                        const std::vector<double>& thresholds = coco_thresholds());

struct RelationAccuracy {
    double unit = 1.0;
    double role = 1.0;
    double type = 1.0;
};

// Per-row agreement with the label matrix: unit-edge target, role-edge
// target, and (target, type) jointly.
RelationAccuracy relation_accuracy(const RelationPrediction& pred, const RelationLabelMatrix& m);

// Same agreement restricted to supervised rows in model index space.
RelationAccuracy relation_accuracy(const RelationPrediction& pred, const RelationTargets& t);

// Prediction page sharing the ground truth's text lines, carrying decoded
// structure and predicted graphics. Not validated: predictions may leave
// lines unassigned.
DocumentPage page_from_prediction(const DocumentPage& gt, const DocumentStructure& s,
                                  const std::vector<GraphicalProposal>& graphics);

struct MetricReport {
    std::vector<double> per_class_ap;
    double map = 0.0;
    double text_reds = 0.0;
    double graphical_reds = 0.0;
    double graphical_links = 0.0;
    GroupingF1 grouping;
    RelationAccuracy relation_acc;
};

std::string metric_report_json(const MetricReport& r);

} // namespace dla
