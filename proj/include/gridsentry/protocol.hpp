#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridsentry/pomdp.hpp"
#include "gridsentry/power_model.hpp"
#include "gridsentry/powerflow.hpp"

namespace gridsentry {

enum class MessageKind : uint8_t {
    TsmSendCase = 0x01,
    TsmSetData = 0x02,
    TsmGetClientState = 0x03,
    TcmSendData = 0x04,
};

struct DataItem {
    std::string object;
    std::string field;
    std::string value;
    bool operator==(const DataItem&) const = default;
};

struct GetItem {
    std::string object;
    std::string field;
    bool operator==(const GetItem&) const = default;
};

struct Message {
    MessageKind kind = MessageKind::TsmSendCase;
    std::string case_text;             // TsmSendCase
    std::vector<DataItem> set_items;   // TsmSetData
    std::vector<GetItem> get_items;    // TsmGetClientState
    std::vector<DataItem> data_items;  // TcmSendData
    bool operator==(const Message&) const = default;
};

Message make_send_case(std::string case_text);
Message make_set_data(std::vector<DataItem> items);
Message make_get_state(std::vector<GetItem> items);
Message make_send_data(std::vector<DataItem> items);
Message make_error_reply(const std::string& code, const std::string& message);
// Returns the error code when the message is an error reply.
std::optional<std::string> error_code(const Message& msg);

// Frame: 4-byte big-endian body length, 1-byte kind tag, UTF-8 body.
std::string encode(const Message& msg);
// Decodes one frame from the front of `buffer`. Returns nullopt when the
// buffer does not yet hold a complete frame; `consumed` is the byte count
// of the decoded frame. Malformed input throws ProtocolError.
std::optional<Message> try_decode(const std::string& buffer, size_t& consumed);
// Whole-buffer variant: an incomplete frame throws a retryable ProtocolError.
Message decode(const std::string& bytes);

class MessageTransport {
  public:
    virtual ~MessageTransport() = default;
    virtual void send(const Message& msg) = 0;
    virtual Message receive() = 0;  // blocks; throws ProtocolError on loss
};

// Power-flow side of the conversation, independent of any transport: feed
// it the server's requests, send back whatever it returns.
class ClientSession {
  public:
    explicit ClientSession(SeverityConfig config = {});
    std::optional<Message> handle(const Message& request);

  private:
    std::optional<Message> apply_case(const Message& request);
    std::optional<Message> apply_set(const Message& request);
    std::optional<Message> answer_get(const Message& request);
    void resolve();

    SeverityConfig config_;
    std::optional<PowerCase> pcase_;
    std::optional<FlowSolution> solution_;
};

// Evaluates outage severities by driving a remote ClientSession: pushes the
// status of every relay-controlled branch, then reads OverloadRank.
class RemoteSeverityEvaluator : public SeverityEvaluator {
  public:
    RemoteSeverityEvaluator(MessageTransport& transport, std::vector<std::string> relay_branches,
                            double divergence_penalty);
    double evaluate(const std::vector<std::string>& outage_branches, bool& penalized) override;

  private:
    MessageTransport& transport_;
    std::vector<std::string> relay_branches_;
    double penalty_;
};

std::string branch_object_id(const std::string& branch_id);
constexpr const char* kCaseObject = "PWCaseInformation";
constexpr const char* kOverloadField = "OverloadRank";
constexpr const char* kLineStatusField = "LineStatus";
constexpr const char* kFlowField = "FlowMW";
constexpr const char* kDivergedValue = "DIVERGED";

uint16_t default_port();  // 7047 unless GRIDSENTRY_PORT overrides it

}  // namespace gridsentry
