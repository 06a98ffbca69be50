#include "gridsentry/protocol.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>

#include "gridsentry/errors.hpp"
#include "gridsentry/util.hpp"

namespace gridsentry {

Message make_send_case(std::string case_text) {
    Message m;
    m.kind = MessageKind::TsmSendCase;
    m.case_text = std::move(case_text);
    return m;
}

Message make_set_data(std::vector<DataItem> items) {
    Message m;
    m.kind = MessageKind::TsmSetData;
    m.set_items = std::move(items);
    return m;
}

Message make_get_state(std::vector<GetItem> items) {
    Message m;
    m.kind = MessageKind::TsmGetClientState;
    m.get_items = std::move(items);
    return m;
}

Message make_send_data(std::vector<DataItem> items) {
    Message m;
    m.kind = MessageKind::TcmSendData;
    m.data_items = std::move(items);
    return m;
}

Message make_error_reply(const std::string& code, const std::string& message) {
    return make_send_data({{"ERROR", code, message}});
}

std::optional<std::string> error_code(const Message& msg) {
    if (msg.kind == MessageKind::TcmSendData && msg.data_items.size() == 1 &&
        msg.data_items[0].object == "ERROR")
        return msg.data_items[0].field;
    return std::nullopt;
}

namespace {

constexpr size_t kMaxBody = 0x7fffffff;

void check_field(const std::string& s) {
    if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos)
        throw ProtocolError("message fields must not contain tabs or newlines");
}

std::string body_of(const Message& msg) {
    std::string body;
    switch (msg.kind) {
        case MessageKind::TsmSendCase:
            return msg.case_text;
        case MessageKind::TsmSetData:
            body = "SET\n";
            for (const auto& it : msg.set_items) {
                check_field(it.object);
                check_field(it.field);
                check_field(it.value);
                body += it.object + "\t" + it.field + "\t" + it.value + "\n";
            }
            return body;
        case MessageKind::TsmGetClientState:
            body = "GET\n";
            for (const auto& it : msg.get_items) {
                check_field(it.object);
                check_field(it.field);
                body += it.object + "\t" + it.field + "\n";
            }
            return body;
        case MessageKind::TcmSendData:
            body = "DATA\n";
            for (const auto& it : msg.data_items) {
                check_field(it.object);
                check_field(it.field);
                check_field(it.value);
                body += it.object + "\t" + it.field + "\t" + it.value + "\n";
            }
            return body;
    }
    throw ProtocolError("unknown message kind");
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

Message parse_body(MessageKind kind, const std::string& body) {
    Message m;
    m.kind = kind;
    if (kind == MessageKind::TsmSendCase) {
        m.case_text = body;
        return m;
    }
    const char* header = kind == MessageKind::TsmSetData          ? "SET"
                         : kind == MessageKind::TsmGetClientState ? "GET"
                                                                  : "DATA";
    size_t expected_fields = kind == MessageKind::TsmGetClientState ? 2 : 3;
    size_t pos = 0;
    std::vector<std::string> lines;
    while (pos < body.size()) {
        size_t nl = body.find('\n', pos);
        if (nl == std::string::npos) throw ProtocolError("message body line not terminated");
        lines.push_back(body.substr(pos, nl - pos));
        pos = nl + 1;
    }
    if (lines.empty() || lines[0] != header)
        throw ProtocolError(std::string("message body must start with ") + header);
    for (size_t i = 1; i < lines.size(); ++i) {
        auto fields = split_fields(lines[i]);
        if (fields.size() != expected_fields)
            throw ProtocolError("message body line has " + std::to_string(fields.size()) +
                                " fields, expected " + std::to_string(expected_fields));
        if (kind == MessageKind::TsmGetClientState)
            m.get_items.push_back({fields[0], fields[1]});
        else if (kind == MessageKind::TsmSetData)
            m.set_items.push_back({fields[0], fields[1], fields[2]});
        else
            m.data_items.push_back({fields[0], fields[1], fields[2]});
    }
    return m;
}

}  // namespace

std::string encode(const Message& msg) {
    std::string body = body_of(msg);
    if (body.size() > kMaxBody) throw ProtocolError("message body exceeds 2^31 - 1 bytes");
    std::string frame;
    frame.reserve(5 + body.size());
    uint32_t len = static_cast<uint32_t>(body.size());
    frame.push_back(static_cast<char>((len >> 24) & 0xff));
    frame.push_back(static_cast<char>((len >> 16) & 0xff));
    frame.push_back(static_cast<char>((len >> 8) & 0xff));
    frame.push_back(static_cast<char>(len & 0xff));
    frame.push_back(static_cast<char>(msg.kind));
    frame += body;
    return frame;
}

std::optional<Message> try_decode(const std::string& buffer, size_t& consumed) {
    consumed = 0;
    if (buffer.size() < 5) return std::nullopt;
    uint32_t len = (static_cast<uint32_t>(static_cast<unsigned char>(buffer[0])) << 24) |
                   (static_cast<uint32_t>(static_cast<unsigned char>(buffer[1])) << 16) |
                   (static_cast<uint32_t>(static_cast<unsigned char>(buffer[2])) << 8) |
                   static_cast<uint32_t>(static_cast<unsigned char>(buffer[3]));
    if (len > kMaxBody) throw ProtocolError("declared body length exceeds 2^31 - 1 bytes");
    uint8_t tag = static_cast<unsigned char>(buffer[4]);
    if (tag < 0x01 || tag > 0x04)
        throw ProtocolError("unknown message kind tag " + std::to_string(tag));
    if (buffer.size() < 5 + static_cast<size_t>(len)) return std::nullopt;
    Message m = parse_body(static_cast<MessageKind>(tag), buffer.substr(5, len));
    consumed = 5 + static_cast<size_t>(len);
    return m;
}

Message decode(const std::string& bytes) {
    size_t consumed = 0;
    auto m = try_decode(bytes, consumed);
    if (!m) throw ProtocolError("truncated frame", /*retryable=*/true);
    return *m;
}

ClientSession::ClientSession(SeverityConfig config) : config_(config) {}

void ClientSession::resolve() {
    solution_ = config_.mode == FlowMode::Dc ? solve_dc(*pcase_) : solve_ac(*pcase_, config_.ac);
}

std::optional<Message> ClientSession::handle(const Message& request) {
    try {
        switch (request.kind) {
            case MessageKind::TsmSendCase:
                return apply_case(request);
            case MessageKind::TsmSetData:
                return apply_set(request);
            case MessageKind::TsmGetClientState:
                return answer_get(request);
            case MessageKind::TcmSendData:
                return make_error_reply("malformed", "client does not accept data messages");
        }
        return make_error_reply("malformed", "unknown message kind");
    } catch (const ParseError& e) {
        return make_error_reply("malformed", e.what());
    } catch (const std::exception& e) {
        return make_error_reply("bad-value", e.what());
    }
}

std::optional<Message> ClientSession::apply_case(const Message& request) {
    PowerCase parsed = parse_case(request.case_text, "<wire-case>");
    pcase_ = resolve_topology(parsed);
    resolve();
    return std::nullopt;
}

std::optional<Message> ClientSession::apply_set(const Message& request) {
    if (!pcase_) return make_error_reply("no-case", "no case loaded");
    // Validate the whole batch before touching the case.
    struct Change {
        std::string branch;
        SwitchStatus status;
    };
    std::vector<Change> changes;
    for (const auto& item : request.set_items) {
        auto tokens = split_tokens(item.object);
        if (tokens.size() != 2 || tokens[0] != "BRANCH")
            return make_error_reply("bad-object", "unknown object '" + item.object + "'");
        if (!pcase_->find_branch(tokens[1]))
            return make_error_reply("bad-object", "unknown branch '" + tokens[1] + "'");
        if (item.field != kLineStatusField)
            return make_error_reply("bad-field", "unknown field '" + item.field + "'");
        if (item.value != "Open" && item.value != "Closed")
            return make_error_reply("bad-value",
                                    "LineStatus must be Open or Closed, got '" + item.value + "'");
        changes.push_back(
            {tokens[1], item.value == "Open" ? SwitchStatus::Open : SwitchStatus::Closed});
    }
    for (const auto& c : changes)
        for (auto& br : pcase_->branches)
            if (br.id == c.branch) br.status = c.status;
    resolve();
    return std::nullopt;
}

std::optional<Message> ClientSession::answer_get(const Message& request) {
    if (!pcase_) return make_error_reply("no-case", "no case loaded");
    std::vector<DataItem> items;
    for (const auto& item : request.get_items) {
        std::string value;
        if (item.object == kCaseObject) {
            if (item.field != kOverloadField)
                return make_error_reply("bad-field", "unknown field '" + item.field + "'");
            value = solution_->converged ? fmt_double(performance_index(*solution_, *pcase_))
                                         : kDivergedValue;
        } else {
            auto tokens = split_tokens(item.object);
            if (tokens.size() != 2 || tokens[0] != "BRANCH")
                return make_error_reply("bad-object", "unknown object '" + item.object + "'");
            const Branch* br = pcase_->find_branch(tokens[1]);
            if (!br) return make_error_reply("bad-object", "unknown branch '" + tokens[1] + "'");
            if (item.field == kLineStatusField) {
                value = br->status == SwitchStatus::Open ? "Open" : "Closed";
            } else if (item.field == kFlowField) {
                auto it = solution_->branch_flows_mw.find(br->id);
                value = fmt_double(it == solution_->branch_flows_mw.end() ? 0.0 : it->second);
            } else {
                return make_error_reply("bad-field", "unknown field '" + item.field + "'");
            }
        }
        items.push_back({item.object, item.field, value});
    }
    return make_send_data(std::move(items));
}

std::string branch_object_id(const std::string& branch_id) {
    return "BRANCH '" + branch_id + "'";
}

RemoteSeverityEvaluator::RemoteSeverityEvaluator(MessageTransport& transport,
                                                 std::vector<std::string> relay_branches,
                                                 double divergence_penalty)
    : transport_(transport), relay_branches_(std::move(relay_branches)), penalty_(divergence_penalty) {}

double RemoteSeverityEvaluator::evaluate(const std::vector<std::string>& outage_branches,
                                         bool& penalized) {
    penalized = false;
    std::vector<DataItem> sets;
    for (const auto& br : relay_branches_) {
        bool open = std::find(outage_branches.begin(), outage_branches.end(), br) !=
                    outage_branches.end();
        sets.push_back({branch_object_id(br), kLineStatusField, open ? "Open" : "Closed"});
    }
    transport_.send(make_set_data(std::move(sets)));

    Message get = make_get_state({{kCaseObject, kOverloadField}});
    for (int attempt = 0; attempt < 2; ++attempt) {
        transport_.send(get);
        Message reply = transport_.receive();
        if (auto code = error_code(reply))
            throw ProtocolError("client reported error '" + *code +
                                "': " + reply.data_items[0].value);
        bool matches = reply.kind == MessageKind::TcmSendData && reply.data_items.size() == 1 &&
                       reply.data_items[0].object == kCaseObject &&
                       reply.data_items[0].field == kOverloadField;
        if (!matches) {
            std::cerr << "gridsentry: reply does not match the request, retrying once\n";
            continue;
        }
        const std::string& value = reply.data_items[0].value;
        if (value == kDivergedValue) {
            penalized = true;
            return penalty_;
        }
        try {
            return parse_double(value);
        } catch (const std::invalid_argument&) {
            throw ProtocolError("client returned a non-numeric overload rank '" + value + "'");
        }
    }
    throw ProtocolError("client reply mismatched the request twice");
}

uint16_t default_port() {
    if (const char* env = std::getenv("GRIDSENTRY_PORT")) {
        try {
            long p = parse_long(env);
            if (p >= 1 && p <= 65535) return static_cast<uint16_t>(p);
        } catch (const std::invalid_argument&) {
        }
        std::cerr << "gridsentry: ignoring invalid GRIDSENTRY_PORT '" << env << "'\n";
    }
    return 7047;
}

}  // namespace gridsentry
